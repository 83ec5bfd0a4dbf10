#include <iostream>

#include "ahmsa/cli/commands.hpp"

int main(int argc, char** argv) { return ahmsa::cli::run(argc, argv, std::cout, std::cerr); }
