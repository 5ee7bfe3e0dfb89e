#include "pkt/cli.hpp"

int main(int argc, char** argv) { return pkt::cli::run_cli(argc, argv); }
