#include "bmvae/cli.hpp"

int main(int argc, char** argv)
{
  return bmvae::run_cli(argc, argv);
}
