#include "abmsim/cli/cli.hpp"

int main(int argc, char** argv) { return abmsim::cli::dispatch(argc, argv); }
