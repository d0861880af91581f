#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "famed/haze_model.hpp"
#include "famed/tensor.hpp"
#include "famed/trainer.hpp"

namespace famed {

/// Deterministic 64-bit mixer used to derive per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// Procedural depth map [1,1,h,w] in [0,1]: a random-direction linear ramp,
/// a few piecewise-planar regions and a smooth noise field, blurred lightly
/// and normalized.
Tensor procedural_depth(int h, int w, std::uint64_t seed);

/// Procedural haze-free scene [1,3,h,w]: layered occluding shapes with
/// random colours, shading gradients and fine texture (a dead-leaves
/// model). Used when no photo corpus is supplied.
Tensor procedural_scene(int h, int w, std::uint64_t seed);

struct SynthConfig {
  std::string clear_dir;       // empty: generate procedural scenes
  std::string depth_dir;       // optional depth maps matched by file stem
  int procedural_count = 80;   // scenes generated when clear_dir is empty
  int height = 256;
  int width = 256;
  float beta_min = 0.6f;
  float beta_max = 1.8f;
  float airlight_min = 0.7f;   // gray airlight, uniform per image
  float airlight_max = 1.0f;
  double val_fraction = 0.0;
  double test_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
  std::string describe() const;
};

struct ManifestEntry {
  std::string split;         // train | val | test
  std::string name;
  std::string clear;         // paths as written in the manifest
  std::string hazy;
  std::string transmission;
  std::string depth;         // file path or "procedural:<seed>"
  float beta = 0.0f;
  Airlight airlight{1.0f, 1.0f, 1.0f};
};

struct DatasetManifest {
  std::string root;  // directory relative paths resolve against
  std::vector<ManifestEntry> entries;

  std::string resolve(const std::string& path) const;
  std::vector<const ManifestEntry*> split(const std::string& name) const;
  /// Depth map of an entry (regenerated for procedural depth).
  Tensor load_depth(const ManifestEntry& e) const;
};

inline constexpr const char* kManifestName = "manifest.tsv";

/// Writes clear (procedural mode), hazy and transmission PNGs plus
/// manifest.tsv into out_dir and returns the manifest.
DatasetManifest synthesize_dataset(const SynthConfig& config, const std::string& out_dir);

void write_manifest(const DatasetManifest& manifest, const std::string& path);
/// Parses a manifest and checks that every referenced file exists and that
/// no name appears in two splits.
DatasetManifest read_manifest(const std::string& path);

/// Loads (hazy, clear) pairs of one split.
std::vector<ImagePair> load_pairs(const DatasetManifest& manifest, const std::string& split);

}  // namespace famed
