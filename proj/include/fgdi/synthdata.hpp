/*
 * Copyright 2026 The FGDI Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Reproducible multi-domain identity data.
//
// Each identity owns a latent appearance code rendered into a small
// person-like image; a domain applies a per-channel affine style, a
// procedural background and Gaussian noise on top. Every routine is a pure
// function of its inputs and seeds.

#include "fgdi/common.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace fgdi::synth {

struct ImageGeometry {
  int height = 32;
  int width = 16;
  int channels = 3;

  int size() const { return height * width * channels; }
  int offset(int h, int w, int c) const { return (h * width + w) * channels + c; }
  bool operator==(const ImageGeometry&) const = default;
};

struct DomainSpec {
  int domain_id = 0;
  RowVector gain;  // per channel, strictly positive
  RowVector bias;  // per channel
  std::uint64_t background_seed = 0;
  double noise_sigma = 0.0;

  /// gain followed by bias; the vector domain separation is measured on.
  RowVector style_affine() const;
};

struct Identity {
  int pid = 0;
  Vector latent;
  int home_domain = 0;
};

struct ImageSample {
  RowVector pixels;  // geometry.size() values in (h, w, c) order, all in [0,1]
  int pid = 0;
  int domain_id = 0;
  int camera_id = 0;
};

/// One source pool per training domain plus query/gallery from the held-out
/// domain. Source pools are listed in ascending domain order.
struct DatasetSplit {
  ImageGeometry geometry;
  std::vector<int> train_domains;
  std::vector<std::vector<ImageSample>> train;
  int held_out_domain = -1;
  std::vector<ImageSample> query;
  std::vector<ImageSample> gallery;
  std::vector<Identity> identities;  // every identity referenced by the split

  std::size_t train_size() const;
  /// Source pools concatenated in order.
  std::vector<const ImageSample*> flat_train() const;
  const Identity& identity(int pid) const;
};

struct DataConfig {
  std::uint64_t seed = 0;
  int num_domains = 4;
  std::vector<int> source_domains{0, 1, 2};
  int held_out_domain = 3;
  int pids_per_domain = 20;
  int held_out_pids = 20;
  int images_per_pid = 8;
  int held_out_cameras = 2;
  int latent_dim = 16;
  ImageGeometry geometry;

  void validate() const;
};

std::vector<DomainSpec> generate_domain_specs(std::uint64_t seed, int num_domains);

/// Renders identities with a fixed appearance decoder derived from
/// `decoder_seed`; the decoder is shared by all domains so appearance is a
/// property of the identity alone.
class Renderer {
 public:
  Renderer(ImageGeometry geometry, int latent_dim, std::uint64_t decoder_seed);

  ImageSample render(const Identity& identity, const DomainSpec& spec, int camera_id,
                     std::uint64_t noise_seed) const;

  const ImageGeometry& geometry() const { return geometry_; }
  int latent_dim() const { return latent_dim_; }

 private:
  ImageGeometry geometry_;
  int latent_dim_;
  Matrix head_color_, upper_color_, lower_color_, pattern_;  // rows x latent_dim
};

ImageSample render_sample(const Identity& identity, const DomainSpec& spec, int camera_id,
                          std::uint64_t noise_seed, const Renderer& renderer);

/// Identity for a given pool slot; deterministic in (seed, pid).
Identity make_identity(std::uint64_t seed, int pid, int home_domain, int latent_dim);

DatasetSplit build_dataset(const DataConfig& cfg);

/// All domains of a family, each with a disjoint train pool and test pool
/// (query/gallery). Used by the cross-domain protocols.
struct DomainPools {
  DomainSpec spec;
  std::vector<ImageSample> train;
  std::vector<ImageSample> query;
  std::vector<ImageSample> gallery;
  std::vector<Identity> identities;
};

struct DatasetFamily {
  ImageGeometry geometry;
  std::vector<DomainPools> domains;

  /// Training on the train pools of `sources` (plus their test pools when
  /// `merge_test_pools`) and testing on `target`'s query/gallery.
  DatasetSplit split(const std::vector<int>& sources, int target, bool merge_test_pools) const;
};

DatasetFamily build_family(const DataConfig& cfg);

/// Binary family archive: "FGDIDATA", u64 manifest length, JSON manifest
/// (geometry, domain styles, identities, per-sample labels), then every
/// pixel as little-endian float64 in pool order.
void save_family(const DatasetFamily& family, const std::filesystem::path& file);
DatasetFamily load_family(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// PK batch sampling
// ---------------------------------------------------------------------------

class PkSampler {
 public:
  /// `pids` lists the identity of each training sample in flat order.
  PkSampler(std::vector<int> pids, int P, int K);

  /// Exactly P distinct identities with K sample indices each.
  std::vector<int> sample(std::mt19937_64& rng) const;

  int batch_size() const { return p_ * k_; }

 private:
  int p_, k_;
  std::vector<int> distinct_;
  std::vector<std::vector<int>> members_;
};

std::vector<int> pk_sample(const DatasetSplit& split, int P, int K, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Optional real-data ingestion
// ---------------------------------------------------------------------------

/// Loads `<pid>_c<camid>_<idx>.ppm` files (binary PPM) from one directory,
/// resized by nearest neighbour to `geometry`. Files not matching the naming
/// pattern are skipped; other image encodings raise IoError.
std::vector<ImageSample> load_image_directory(const std::filesystem::path& dir, int domain_id,
                                              const ImageGeometry& geometry);

/// Writes a binary PPM; handy for inspecting rendered samples.
void write_ppm(const std::filesystem::path& file, const ImageSample& sample,
               const ImageGeometry& geometry);

/// splitmix64 finaliser used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace fgdi::synth
