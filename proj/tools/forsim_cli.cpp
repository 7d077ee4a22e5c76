#include "forsim/cli.hpp"

int main(int argc, char** argv) { return forsim::run_cli(argc, argv); }
