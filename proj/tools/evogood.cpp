#include <iostream>

#include "evogood/cli.hpp"

int main(int argc, char** argv) { return evogood::cli::run(argc, argv, std::cout, std::cerr); }
