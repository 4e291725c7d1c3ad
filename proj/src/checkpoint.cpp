#include <string>

#include "sudo/error.hpp"
#include "sudo/io.hpp"
#include "sudo/training.hpp"

namespace sudo {
namespace {

constexpr char kMagic[4] = {'S', 'U', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const Architecture& arch = ckpt.arch;
  if (!(ckpt.params.arch() == arch)) throw std::logic_error("checkpoint params do not match architecture");
  ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put_u32(kVersion);
  w.put_u32(static_cast<std::uint32_t>(arch.data_dim));
  w.put_u32(static_cast<std::uint32_t>(arch.num_conditions));
  w.put_u32(static_cast<std::uint32_t>(arch.time_dim));
  w.put_u32(static_cast<std::uint32_t>(arch.cond_dim));
  w.put_u32(static_cast<std::uint32_t>(arch.hidden.size()));
  for (std::size_t h : arch.hidden) w.put_u32(static_cast<std::uint32_t>(h));
  w.put_u32(static_cast<std::uint32_t>(ckpt.timesteps));
  w.put_f64(ckpt.beta_start);
  w.put_f64(ckpt.beta_end);
  w.put_u8(static_cast<std::uint8_t>(ckpt.method));
  w.put_u64(ckpt.step);
  w.put_u64(ckpt.seed);
  for (double v : ckpt.params.values()) w.put_f64(v);
  w.put_u8(ckpt.optim ? 1 : 0);
  if (ckpt.optim) {
    w.put_u64(ckpt.optim->step);
    for (double v : ckpt.optim->m) w.put_f64(v);
    for (double v : ckpt.optim->v) w.put_f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.get_bytes(4) != std::string_view(kMagic, 4)) {
    throw FormatError("bad checkpoint magic", 0);
  }
  if (r.get_u32() != kVersion) throw FormatError("unsupported checkpoint version", 4);

  Checkpoint ckpt;
  const std::size_t arch_offset = r.offset();
  ckpt.arch.data_dim = r.get_u32();
  ckpt.arch.num_conditions = r.get_u32();
  ckpt.arch.time_dim = r.get_u32();
  ckpt.arch.cond_dim = r.get_u32();
  const std::uint32_t n_hidden = r.get_u32();
  if (n_hidden > r.remaining() / 4) r.fail("truncated payload: hidden layer widths");
  ckpt.arch.hidden.resize(n_hidden);
  for (auto& h : ckpt.arch.hidden) h = r.get_u32();
  try {
    ckpt.arch.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid architecture: ") + e.what(), arch_offset);
  }

  const std::size_t sched_offset = r.offset();
  ckpt.timesteps = r.get_u32();
  ckpt.beta_start = r.get_f64();
  ckpt.beta_end = r.get_f64();
  try {
    make_linear_schedule(ckpt.timesteps, ckpt.beta_start, ckpt.beta_end);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid schedule: ") + e.what(), sched_offset);
  }

  const std::size_t method_offset = r.offset();
  const std::uint8_t method = r.get_u8();
  if (method > 2) throw FormatError("unknown training method", method_offset);
  ckpt.method = static_cast<Method>(method);
  ckpt.step = r.get_u64();
  ckpt.seed = r.get_u64();

  ckpt.params = DenoiserParams(ckpt.arch);
  if (ckpt.params.size() > r.remaining() / 8) r.fail("truncated payload: parameter block");
  for (double& v : ckpt.params.values()) v = r.get_f64();

  const std::size_t flag_offset = r.offset();
  const std::uint8_t has_optim = r.get_u8();
  if (has_optim > 1) throw FormatError("bad optimizer-state flag", flag_offset);
  if (has_optim == 1) {
    OptimState state(ckpt.params.size());
    state.step = r.get_u64();
    if (2 * state.m.size() > r.remaining() / 8) r.fail("truncated payload: optimizer state");
    for (double& v : state.m) v = r.get_f64();
    for (double& v : state.v) v = r.get_f64();
    ckpt.optim = std::move(state);
  }
  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  atomic_write(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace sudo
