#include "flex/cli.hpp"

int main(int argc, char** argv) { return flex::dispatch(argc, argv); }
