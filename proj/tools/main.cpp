#include <iostream>

#include "crowdlens/cli.hpp"

int main(int argc, char** argv) { return crowdlens::cli_main(argc, argv, std::cout, std::cerr); }
