// Writes a synthetic reference recording and its jittered query copy.
#include <cstdio>
#include <cstdlib>
#include <string>

#include "synthetic_scene.hpp"

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <reference.evb> <query.evb> [frames]\n", argv[0]);
    return 2;
  }
  evpr::testing::SceneParams scene;
  if (argc > 3) scene.duration_us = std::strtoull(argv[3], nullptr, 10) * 50'000 - 1'000;
  const auto reference = evpr::testing::generate_scene(scene);
  evpr::write_binary(reference, argv[1]);
  evpr::write_binary(evpr::testing::jitter_copy(reference, {}), argv[2]);
  std::printf("%zu reference events\n", reference.events.size());
  return 0;
}
