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

#include "fgdi/synthdata.hpp"

#include "binary_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

namespace fgdi::synth {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RowVector DomainSpec::style_affine() const {
  RowVector v(gain.size() + bias.size());
  v << gain, bias;
  return v;
}

std::vector<DomainSpec> generate_domain_specs(std::uint64_t seed, int num_domains) {
  if (num_domains < 2)
    throw ConfigError("generate_domain_specs: need at least 2 domains for a cross-domain protocol");
  constexpr int kChannels = 3;
  constexpr double kMinSeparation = 0.2;
  std::mt19937_64 rng(mix_seed(seed, 0xd0a1));
  std::uniform_real_distribution<double> gain_dist(0.6, 1.4);
  std::uniform_real_distribution<double> bias_dist(-0.15, 0.15);
  std::uniform_real_distribution<double> noise_dist(0.01, 0.04);
  std::vector<DomainSpec> specs;
  while (static_cast<int>(specs.size()) < num_domains) {
    DomainSpec s;
    s.domain_id = static_cast<int>(specs.size());
    s.gain.resize(kChannels);
    s.bias.resize(kChannels);
    for (int c = 0; c < kChannels; ++c) s.gain(c) = gain_dist(rng);
    for (int c = 0; c < kChannels; ++c) s.bias(c) = bias_dist(rng);
    s.background_seed = rng();
    s.noise_sigma = noise_dist(rng);
    const bool separated = std::all_of(specs.begin(), specs.end(), [&](const DomainSpec& o) {
      return (o.style_affine() - s.style_affine()).norm() >= kMinSeparation;
    });
    if (separated) specs.push_back(std::move(s));
  }
  return specs;
}

Identity make_identity(std::uint64_t seed, int pid, int home_domain, int latent_dim) {
  std::mt19937_64 rng(mix_seed(mix_seed(seed, 0x1d), static_cast<std::uint64_t>(pid)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Identity id;
  id.pid = pid;
  id.home_domain = home_domain;
  id.latent.resize(latent_dim);
  for (int i = 0; i < latent_dim; ++i) id.latent(i) = normal(rng);
  return id;
}

namespace {

Matrix random_decoder(std::mt19937_64& rng, int rows, int latent_dim) {
  std::normal_distribution<double> normal(0.0, 1.2 / std::sqrt(static_cast<double>(latent_dim)));
  Matrix m(rows, latent_dim);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < latent_dim; ++c) m(r, c) = normal(rng);
  return m;
}

Vector sigmoid(const Vector& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

struct Background {
  double base[3], amp, f1, f2, phase[3];

  explicit Background(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& b : base) b = 0.1 + 0.5 * u(rng);
    amp = 0.05 + 0.2 * u(rng);
    f1 = 0.2 + u(rng);
    f2 = 0.2 + u(rng);
    for (double& p : phase) p = 6.283185307179586 * u(rng);
  }

  double at(int h, int w, int c) const {
    return base[c % 3] + amp * std::sin(f1 * h + f2 * w + phase[c % 3]);
  }
};

}  // namespace

Renderer::Renderer(ImageGeometry geometry, int latent_dim, std::uint64_t decoder_seed)
    : geometry_(geometry), latent_dim_(latent_dim) {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (geometry.height < 16 || geometry.width < 8)
    throw ConfigError("image geometry too small for the person renderer (min 16x8)");
  std::mt19937_64 rng(mix_seed(decoder_seed, 0xdec0de));
  head_color_ = random_decoder(rng, 3, latent_dim);
  upper_color_ = random_decoder(rng, 3, latent_dim);
  lower_color_ = random_decoder(rng, 3, latent_dim);
  pattern_ = random_decoder(rng, 4, latent_dim);
}

ImageSample Renderer::render(const Identity& identity, const DomainSpec& spec, int camera_id,
                             std::uint64_t noise_seed) const {
  if (identity.latent.size() != latent_dim_)
    throw ShapeError("render: latent dimension " + std::to_string(identity.latent.size()) +
                     " does not match generator's " + std::to_string(latent_dim_));
  const ImageGeometry& g = geometry_;
  const int H = g.height;
  const int W = g.width;
  const int C = g.channels;
  require_shape(spec.gain.size() >= 1 && spec.bias.size() == spec.gain.size(),
                "render: malformed domain spec");

  const Vector head = sigmoid(head_color_ * identity.latent);
  const Vector upper = sigmoid(upper_color_ * identity.latent);
  const Vector lower = sigmoid(lower_color_ * identity.latent);
  const Vector pat = pattern_ * identity.latent;
  const double stripe_freq = 0.6 + 0.5 * std::tanh(pat(0));
  const double stripe_amp = 0.35 * sigmoid(pat.segment(1, 1))(0);
  const int torso_half = (W / 4) + (pat(2) > 0.0 ? 1 : 0);
  const bool bag = pat(3) > 0.3;

  std::mt19937_64 rng(mix_seed(mix_seed(noise_seed, static_cast<std::uint64_t>(identity.pid)),
                               static_cast<std::uint64_t>(camera_id) * 131 +
                                   static_cast<std::uint64_t>(spec.domain_id)));
  std::uniform_int_distribution<int> jitter(-1, 1);
  const int dx = jitter(rng);
  const int dy = jitter(rng);
  const double brightness = (camera_id % 2 == 0) ? 0.92 : 1.08;

  // Layout scales with height; defaults give head 1-7, torso 8-19, legs 20-30.
  const double unit = H / 32.0;
  const int cx = W / 2 + dx;
  const double head_cy = 4.0 * unit + dy;
  const int torso_top = static_cast<int>(8 * unit) + dy;
  const int torso_bottom = static_cast<int>(20 * unit) + dy;
  const int legs_bottom = static_cast<int>(31 * unit) + dy;

  std::vector<double> base(static_cast<std::size_t>(H * W * C), 0.0);
  std::vector<double> mask(static_cast<std::size_t>(H * W), 0.0);
  auto paint = [&](int h, int w, int c, double v) {
    if (h < 0 || h >= H || w < 0 || w >= W) return;
    base[static_cast<std::size_t>(g.offset(h, w, c))] = v;
    mask[static_cast<std::size_t>(h * W + w)] = 1.0;
  };

  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      const double ey = (h - head_cy) / (3.0 * unit);
      const double ex = (w + 0.5 - cx) / (2.5 * unit);
      if (ex * ex + ey * ey <= 1.0)
        for (int c = 0; c < C; ++c) paint(h, w, c, head(c % 3));
    }
  for (int h = torso_top; h < torso_bottom; ++h) {
    const double stripe = 1.0 - stripe_amp * 0.5 * (1.0 + std::sin(stripe_freq * h * 3.0));
    for (int w = cx - torso_half; w < cx + torso_half; ++w)
      for (int c = 0; c < C; ++c) paint(h, w, c, upper(c % 3) * stripe);
  }
  if (bag) {
    for (int h = torso_top + 3; h < torso_top + 7; ++h)
      for (int w = cx + torso_half - 1; w < cx + torso_half + 2; ++w)
        for (int c = 0; c < C; ++c) paint(h, w, c, 1.0 - upper(c % 3));
  }
  const int leg_w = std::max(1, torso_half - 1);
  for (int h = torso_bottom; h < legs_bottom; ++h) {
    for (int w = cx - torso_half; w < cx - torso_half + leg_w; ++w)
      for (int c = 0; c < C; ++c) paint(h, w, c, lower(c % 3));
    for (int w = cx + torso_half - leg_w; w < cx + torso_half; ++w)
      for (int c = 0; c < C; ++c) paint(h, w, c, lower(c % 3));
  }

  const Background bg(spec.background_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  ImageSample s;
  s.pid = identity.pid;
  s.domain_id = spec.domain_id;
  s.camera_id = camera_id;
  s.pixels.resize(g.size());
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int c = 0; c < C; ++c) {
        const int o = g.offset(h, w, c);
        const double m = mask[static_cast<std::size_t>(h * W + w)];
        const int ch = c % static_cast<int>(spec.gain.size());
        double v = spec.gain(ch) * brightness * base[static_cast<std::size_t>(o)] + spec.bias(ch) +
                   (1.0 - m) * bg.at(h, w, c);
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
        s.pixels(o) = std::clamp(v, 0.0, 1.0);
      }
  return s;
}

ImageSample render_sample(const Identity& identity, const DomainSpec& spec, int camera_id,
                          std::uint64_t noise_seed, const Renderer& renderer) {
  return renderer.render(identity, spec, camera_id, noise_seed);
}

void DataConfig::validate() const {
  if (num_domains < 2) throw ConfigError("data.num_domains must be >= 2");
  if (source_domains.size() < 2) throw ConfigError("data.source_domains must name >= 2 domains");
  std::set<int> seen;
  for (int d : source_domains) {
    if (d < 0 || d >= num_domains) throw ConfigError("data.source_domains: domain out of range");
    if (!seen.insert(d).second) throw ConfigError("data.source_domains: duplicate domain");
  }
  if (held_out_domain < 0 || held_out_domain >= num_domains)
    throw ConfigError("data.held_out_domain out of range");
  if (seen.count(held_out_domain))
    throw ConfigError("data.held_out_domain is also listed among source domains");
  if (held_out_cameras < 2)
    throw ConfigError("data.held_out_cameras must be >= 2 (no valid query/gallery pairing)");
  if (pids_per_domain < 1 || held_out_pids < 1) throw ConfigError("pid counts must be >= 1");
  if (images_per_pid < 2 * held_out_cameras)
    throw ConfigError("data.images_per_pid must be >= 2 * held_out_cameras");
  if (latent_dim < 1) throw ConfigError("data.latent_dim must be >= 1");
}

namespace {

// Global pid layout: each domain owns a block of train pids followed by a
// block of test pids.
int pid_of(const DataConfig& cfg, int domain, bool test_pool, int index) {
  return domain * (cfg.pids_per_domain + cfg.held_out_pids) +
         (test_pool ? cfg.pids_per_domain : 0) + index;
}

void render_pool(const DataConfig& cfg, const Renderer& renderer, const DomainSpec& spec,
                 bool test_pool, std::vector<Identity>& ids, std::vector<ImageSample>& train,
                 std::vector<ImageSample>* query, std::vector<ImageSample>* gallery) {
  const int count = test_pool ? cfg.held_out_pids : cfg.pids_per_domain;
  for (int i = 0; i < count; ++i) {
    const int pid = pid_of(cfg, spec.domain_id, test_pool, i);
    const Identity id = make_identity(cfg.seed, pid, spec.domain_id, cfg.latent_dim);
    ids.push_back(id);
    std::vector<bool> seen_camera(static_cast<std::size_t>(cfg.held_out_cameras), false);
    for (int j = 0; j < cfg.images_per_pid; ++j) {
      const int cam = j % cfg.held_out_cameras;
      const std::uint64_t noise_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(pid) * 4096 +
                                                              static_cast<std::uint64_t>(j));
      ImageSample s = renderer.render(id, spec, cam, noise_seed);
      if (!test_pool) {
        train.push_back(std::move(s));
      } else if (!seen_camera[static_cast<std::size_t>(cam)]) {
        seen_camera[static_cast<std::size_t>(cam)] = true;
        query->push_back(std::move(s));
      } else {
        gallery->push_back(std::move(s));
      }
    }
  }
}

}  // namespace

std::size_t DatasetSplit::train_size() const {
  std::size_t n = 0;
  for (const auto& pool : train) n += pool.size();
  return n;
}

std::vector<const ImageSample*> DatasetSplit::flat_train() const {
  std::vector<const ImageSample*> out;
  out.reserve(train_size());
  for (const auto& pool : train)
    for (const auto& s : pool) out.push_back(&s);
  return out;
}

const Identity& DatasetSplit::identity(int pid) const {
  for (const auto& id : identities)
    if (id.pid == pid) return id;
  throw ShapeError("unknown pid " + std::to_string(pid));
}

DatasetSplit build_dataset(const DataConfig& cfg) {
  cfg.validate();
  const auto specs = generate_domain_specs(cfg.seed, cfg.num_domains);
  const Renderer renderer(cfg.geometry, cfg.latent_dim, cfg.seed);
  DatasetSplit split;
  split.geometry = cfg.geometry;
  std::vector<int> sources = cfg.source_domains;
  std::sort(sources.begin(), sources.end());
  for (int d : sources) {
    split.train_domains.push_back(d);
    split.train.emplace_back();
    render_pool(cfg, renderer, specs[static_cast<std::size_t>(d)], false, split.identities,
                split.train.back(), nullptr, nullptr);
  }
  split.held_out_domain = cfg.held_out_domain;
  std::vector<ImageSample> unused;
  render_pool(cfg, renderer, specs[static_cast<std::size_t>(cfg.held_out_domain)], true,
              split.identities, unused, &split.query, &split.gallery);
  return split;
}

DatasetFamily build_family(const DataConfig& cfg) {
  if (cfg.num_domains < 2) throw ConfigError("a dataset family needs >= 2 domains");
  if (cfg.held_out_cameras < 2) throw ConfigError("data.held_out_cameras must be >= 2");
  if (cfg.images_per_pid < 2 * cfg.held_out_cameras)
    throw ConfigError("data.images_per_pid must be >= 2 * held_out_cameras");
  const auto specs = generate_domain_specs(cfg.seed, cfg.num_domains);
  const Renderer renderer(cfg.geometry, cfg.latent_dim, cfg.seed);
  DatasetFamily fam;
  fam.geometry = cfg.geometry;
  for (const auto& spec : specs) {
    DomainPools pools;
    pools.spec = spec;
    render_pool(cfg, renderer, spec, false, pools.identities, pools.train, nullptr, nullptr);
    std::vector<ImageSample> unused;
    render_pool(cfg, renderer, spec, true, pools.identities, unused, &pools.query, &pools.gallery);
    fam.domains.push_back(std::move(pools));
  }
  return fam;
}

DatasetSplit DatasetFamily::split(const std::vector<int>& sources, int target,
                                  bool merge_test_pools) const {
  const int n = static_cast<int>(domains.size());
  if (target < 0 || target >= n) throw ConfigError("split: target domain out of range");
  std::vector<int> src = sources;
  std::sort(src.begin(), src.end());
  if (src.size() < 1) throw ConfigError("split: no source domains");
  DatasetSplit s;
  s.geometry = geometry;
  for (int d : src) {
    if (d < 0 || d >= n) throw ConfigError("split: source domain out of range");
    if (d == target) throw ConfigError("split: target domain listed among sources");
    const DomainPools& p = domains[static_cast<std::size_t>(d)];
    s.train_domains.push_back(d);
    std::vector<ImageSample> pool = p.train;
    if (merge_test_pools) {
      pool.insert(pool.end(), p.query.begin(), p.query.end());
      pool.insert(pool.end(), p.gallery.begin(), p.gallery.end());
    }
    s.train.push_back(std::move(pool));
    for (const auto& id : p.identities) s.identities.push_back(id);
  }
  const DomainPools& t = domains[static_cast<std::size_t>(target)];
  s.held_out_domain = target;
  s.query = t.query;
  s.gallery = t.gallery;
  for (const auto& id : t.identities) s.identities.push_back(id);
  return s;
}

// ---------------------------------------------------------------------------

PkSampler::PkSampler(std::vector<int> pids, int P, int K) : p_(P), k_(K) {
  if (P < 2) throw ConfigError("PK sampling needs P >= 2 identities per batch");
  if (K < 2) throw ConfigError("PK sampling needs K >= 2 instances per identity");
  if (static_cast<std::size_t>(P) * static_cast<std::size_t>(K) > pids.size())
    throw ConfigError("PK batch P*K exceeds the training set size");
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < pids.size(); ++i) groups[pids[i]].push_back(static_cast<int>(i));
  if (static_cast<int>(groups.size()) < P)
    throw ConfigError("PK sampling: only " + std::to_string(groups.size()) +
                      " distinct pids, fewer than P=" + std::to_string(P));
  for (auto& [pid, members] : groups) {
    distinct_.push_back(pid);
    members_.push_back(std::move(members));
  }
}

std::vector<int> PkSampler::sample(std::mt19937_64& rng) const {
  std::vector<int> order(distinct_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  // Partial Fisher-Yates: the first P entries become the chosen identities.
  for (int i = 0; i < p_; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(order.size()) - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(p_ * k_));
  for (int i = 0; i < p_; ++i) {
    std::vector<int> members = members_[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    const int n = static_cast<int>(members.size());
    if (n >= k_) {
      for (int j = 0; j < k_; ++j) {
        std::uniform_int_distribution<int> pick(j, n - 1);
        std::swap(members[static_cast<std::size_t>(j)], members[static_cast<std::size_t>(pick(rng))]);
        batch.push_back(members[static_cast<std::size_t>(j)]);
      }
    } else {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int j = 0; j < k_; ++j) batch.push_back(members[static_cast<std::size_t>(pick(rng))]);
    }
  }
  return batch;
}

std::vector<int> pk_sample(const DatasetSplit& split, int P, int K, std::mt19937_64& rng) {
  std::vector<int> pids;
  for (const ImageSample* s : split.flat_train()) pids.push_back(s->pid);
  return PkSampler(std::move(pids), P, K).sample(rng);
}

// ---------------------------------------------------------------------------

namespace {

struct PpmImage {
  int width = 0, height = 0;
  std::vector<unsigned char> rgb;
};

PpmImage read_ppm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw IoError(file.string() + ": only binary PPM (P6) is supported");
  auto next_int = [&]() {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
    }
    if (!(in >> v)) throw IoError(file.string() + ": malformed PPM header");
    return v;
  };
  PpmImage img;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw IoError(file.string() + ": only 8-bit PPM is supported");
  in.get();
  img.rgb.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!in) throw IoError(file.string() + ": truncated pixel data");
  return img;
}

}  // namespace

std::vector<ImageSample> load_image_directory(const std::filesystem::path& dir, int domain_id,
                                              const ImageGeometry& geometry) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex kName(R"(^(-?\d+)_c(\d+)_(\d+)\.(\w+)$)");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<ImageSample> out;
  for (const auto& f : files) {
    std::smatch m;
    const std::string name = f.filename().string();
    if (!std::regex_match(name, m, kName)) continue;
    const int pid = std::stoi(m[1].str());
    if (pid < 0) continue;  // Market-1501 junk images use pid -1
    if (m[4].str() != "ppm")
      throw IoError(name + ": unsupported image encoding, convert to binary PPM");
    const PpmImage img = read_ppm(f);
    ImageSample s;
    s.pid = pid;
    s.domain_id = domain_id;
    s.camera_id = std::stoi(m[2].str());
    s.pixels.resize(geometry.size());
    for (int h = 0; h < geometry.height; ++h)
      for (int w = 0; w < geometry.width; ++w) {
        const int sh = h * img.height / geometry.height;
        const int sw = w * img.width / geometry.width;
        for (int c = 0; c < geometry.channels; ++c) {
          const std::size_t src = (static_cast<std::size_t>(sh) * img.width + sw) * 3 + (c % 3);
          s.pixels(geometry.offset(h, w, c)) = img.rgb[src] / 255.0;
        }
      }
    out.push_back(std::move(s));
  }
  return out;
}

void write_ppm(const std::filesystem::path& file, const ImageSample& sample,
               const ImageGeometry& geometry) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "P6\n" << geometry.width << " " << geometry.height << "\n255\n";
  for (int h = 0; h < geometry.height; ++h)
    for (int w = 0; w < geometry.width; ++w)
      for (int c = 0; c < 3; ++c) {
        const double v = sample.pixels(geometry.offset(h, w, c % geometry.channels));
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kArchiveMagic[9] = "FGDIDATA";

nlohmann::ordered_json pool_labels(const std::vector<ImageSample>& pool) {
  std::vector<int> pids, cams;
  for (const auto& s : pool) {
    pids.push_back(s.pid);
    cams.push_back(s.camera_id);
  }
  return {{"pids", pids}, {"camera_ids", cams}};
}

std::vector<ImageSample> read_pool(std::istream& in, const nlohmann::json& labels, int domain_id,
                                   int pixels) {
  const auto pids = labels.at("pids").get<std::vector<int>>();
  const auto cams = labels.at("camera_ids").get<std::vector<int>>();
  if (pids.size() != cams.size()) throw IoError("archive: label arrays differ in length");
  std::vector<ImageSample> pool(pids.size());
  for (std::size_t i = 0; i < pids.size(); ++i) {
    pool[i].pid = pids[i];
    pool[i].camera_id = cams[i];
    pool[i].domain_id = domain_id;
    pool[i].pixels.resize(pixels);
    for (int k = 0; k < pixels; ++k) pool[i].pixels(k) = io::read_f64(in);
  }
  return pool;
}

std::vector<double> to_std(const RowVector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void save_family(const DatasetFamily& family, const std::filesystem::path& file) {
  nlohmann::ordered_json m;
  m["format"] = "fgdi-dataset";
  m["version"] = 1;
  m["geometry"] = {{"height", family.geometry.height},
                   {"width", family.geometry.width},
                   {"channels", family.geometry.channels}};
  nlohmann::ordered_json domains = nlohmann::ordered_json::array();
  for (const auto& d : family.domains) {
    nlohmann::ordered_json j;
    j["domain_id"] = d.spec.domain_id;
    j["gain"] = to_std(d.spec.gain);
    j["bias"] = to_std(d.spec.bias);
    j["background_seed"] = d.spec.background_seed;
    j["noise_sigma"] = d.spec.noise_sigma;
    nlohmann::ordered_json ids = nlohmann::ordered_json::array();
    for (const auto& id : d.identities) {
      ids.push_back({{"pid", id.pid},
                     {"home_domain", id.home_domain},
                     {"latent", std::vector<double>(id.latent.data(), id.latent.data() + id.latent.size())}});
    }
    j["identities"] = ids;
    j["train"] = pool_labels(d.train);
    j["query"] = pool_labels(d.query);
    j["gallery"] = pool_labels(d.gallery);
    domains.push_back(j);
  }
  m["domains"] = domains;
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  io::write_header(out, kArchiveMagic, m.dump());
  for (const auto& d : family.domains)
    for (const auto* pool : {&d.train, &d.query, &d.gallery})
      for (const auto& s : *pool)
        for (Index k = 0; k < s.pixels.size(); ++k) io::write_f64(out, s.pixels(k));
  if (!out) throw IoError("failed writing " + file.string());
}

DatasetFamily load_family(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  const nlohmann::json m = nlohmann::json::parse(io::read_header(in, kArchiveMagic, file.string()));
  if (m.at("version") != 1) throw IoError(file.string() + ": unsupported archive version");
  DatasetFamily fam;
  fam.geometry.height = m.at("geometry").at("height");
  fam.geometry.width = m.at("geometry").at("width");
  fam.geometry.channels = m.at("geometry").at("channels");
  for (const auto& j : m.at("domains")) {
    DomainPools d;
    d.spec.domain_id = j.at("domain_id");
    const auto gain = j.at("gain").get<std::vector<double>>();
    const auto bias = j.at("bias").get<std::vector<double>>();
    d.spec.gain = Eigen::Map<const RowVector>(gain.data(), static_cast<Index>(gain.size()));
    d.spec.bias = Eigen::Map<const RowVector>(bias.data(), static_cast<Index>(bias.size()));
    d.spec.background_seed = j.at("background_seed");
    d.spec.noise_sigma = j.at("noise_sigma");
    for (const auto& id : j.at("identities")) {
      const auto latent = id.at("latent").get<std::vector<double>>();
      d.identities.push_back({id.at("pid").get<int>(),
                              Eigen::Map<const Vector>(latent.data(), static_cast<Index>(latent.size())),
                              id.at("home_domain").get<int>()});
    }
    fam.domains.push_back(std::move(d));
  }
  const auto& dj = m.at("domains");
  for (std::size_t i = 0; i < fam.domains.size(); ++i) {
    auto& d = fam.domains[i];
    d.train = read_pool(in, dj[i].at("train"), d.spec.domain_id, fam.geometry.size());
    d.query = read_pool(in, dj[i].at("query"), d.spec.domain_id, fam.geometry.size());
    d.gallery = read_pool(in, dj[i].at("gallery"), d.spec.domain_id, fam.geometry.size());
  }
  return fam;
}

}  // namespace fgdi::synth
