#include "channel_stab/cli.hpp"

int main(int argc, char** argv) { return channel_stab::cli::run(argc, argv); }
