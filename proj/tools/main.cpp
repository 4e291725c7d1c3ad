#include <iostream>

#include "sudo/harness.hpp"

int main(int argc, char** argv) { return sudo::cli_run(argc, argv, std::cout, std::cerr); }
