#include <iostream>

#include "probsheet/cli.hpp"

int main(int argc, char** argv) { return probsheet::cli::main(argc, argv, std::cout, std::cerr); }
