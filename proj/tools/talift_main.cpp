#include <iostream>

#include "talift/cli.hpp"

int main(int argc, char** argv) { return talift::cli::dispatch(argc, argv, std::cout, std::cerr); }
