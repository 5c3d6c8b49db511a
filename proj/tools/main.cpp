#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return loopy::cli::run(argc, argv, std::cout, std::cerr); }
