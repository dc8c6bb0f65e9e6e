#include "brainalign/cli.hpp"

int main(int argc, char** argv) { return brainalign::cli::run_cli(argc, argv); }
