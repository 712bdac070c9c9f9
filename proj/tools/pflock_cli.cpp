#include "pflock/cli.hpp"

int main(int argc, char** argv) { return pflock::cli::run_cli(argc, argv); }
