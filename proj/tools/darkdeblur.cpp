#include "darkdeblur/cli.hpp"

int main(int argc, char** argv) { return darkdeblur::cli::run(argc, argv); }
