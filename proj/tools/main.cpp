#include "hdcgan/cli.hpp"

int main(int argc, char** argv) { return hdc::run(argc, argv); }
