#include "affmart/cli.hpp"

int main(int argc, char** argv) { return affmart::cli::run(argc, argv); }
