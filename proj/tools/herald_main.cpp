#include "herald/cli.hpp"

int main(int argc, char** argv) {
  herald::keep_buffers_resident();
  return herald::cli::run(argc, argv);
}
