#include <iostream>

#include "embchan/cli.hpp"

int main(int argc, char** argv) { return embchan::run_cli(argc, argv, std::cout, std::cerr); }
