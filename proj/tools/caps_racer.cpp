#include "caps/harness/commands.hpp"

int main(int argc, char** argv) { return caps::harness::run_cli(argc, argv); }
