#include "cqfm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return cqfm::run_cli(argc, argv, std::cout, std::cerr); }
