#include <iostream>

#include "voclab/cli.hpp"

int main(int argc, char** argv) { return voclab::cli::run(argc, argv, std::cout, std::cerr); }
