#include "mragnn/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mragnn::run_cli(argc, argv, std::cout, std::cerr); }
