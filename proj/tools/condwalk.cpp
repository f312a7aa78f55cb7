#include "condwalk/cli.hpp"

int main(int argc, char** argv) { return condwalk::cli::run_cli(argc, argv); }
