#include "gridrisk/cli.hpp"

int main(int argc, char** argv) { return gridrisk::cli::run(argc, argv); }
