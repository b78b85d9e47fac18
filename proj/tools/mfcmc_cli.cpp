#include <iostream>

#include "mfcmc/experiments.hpp"

int main(int argc, char** argv) { return mfcmc::run_cli(argc, argv, std::cout, std::cerr); }
