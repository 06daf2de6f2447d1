#include "simlauncher/cli.hpp"

int main(int argc, char** argv) { return simlauncher::run_cli(argc, argv); }
