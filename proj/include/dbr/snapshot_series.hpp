#ifndef DBR_SNAPSHOT_SERIES_HPP
#define DBR_SNAPSHOT_SERIES_HPP

// Snapshot-series storage: on-disk format (binary snapshots + JSON
// manifest), windowed streaming reads, per-step mean subtraction and
// finite-difference estimation of dT/dt.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dbr/core.hpp"
#include "dbr/weighted.hpp"

namespace dbr {

enum class DerivativeScheme { EE1, FD4 };

inline DerivativeScheme derivative_scheme_from_string(const std::string& s) {
  if (s == "EE1" || s == "ee1") return DerivativeScheme::EE1;
  if (s == "FD4" || s == "fd4") return DerivativeScheme::FD4;
  throw ConfigError("unknown derivative scheme: " + s);
}

// Abstract backing store: load the raw (not mean-subtracted) snapshot k.
class SnapshotStore {
 public:
  virtual ~SnapshotStore() = default;
  virtual Matrix load(Eigen::Index k) const = 0;
};

class MemoryStore final : public SnapshotStore {
 public:
  explicit MemoryStore(std::vector<Matrix> snapshots)
      : snapshots_(std::move(snapshots)) {}
  Matrix load(Eigen::Index k) const override { return snapshots_.at(size_t(k)); }

 private:
  std::vector<Matrix> snapshots_;
};

// Generates snapshots on demand; used by testbeds with closed-form fields.
class FunctionStore final : public SnapshotStore {
 public:
  using Generator = std::function<Matrix(Eigen::Index)>;
  explicit FunctionStore(Generator gen) : gen_(std::move(gen)) {}
  Matrix load(Eigen::Index k) const override { return gen_(k); }

 private:
  Generator gen_;
};

namespace detail {

constexpr char kSnapshotMagic[4] = {'D', 'B', 'S', 'N'};
constexpr std::uint32_t kSnapshotVersion = 1;
constexpr size_t kHeaderBytes = 32;

inline void write_snapshot_file(const std::filesystem::path& path,
                                const Matrix& T) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path.string());
  char header[kHeaderBytes] = {};
  std::memcpy(header, kSnapshotMagic, 4);
  std::uint32_t version = kSnapshotVersion;
  std::uint64_t n = std::uint64_t(T.rows()), s = std::uint64_t(T.cols());
  std::memcpy(header + 4, &version, 4);
  std::memcpy(header + 8, &n, 8);
  std::memcpy(header + 16, &s, 8);
  out.write(header, kHeaderBytes);
  // column-major: each sample's state vector is contiguous
  out.write(reinterpret_cast<const char*>(T.data()),
            std::streamsize(sizeof(double)) * T.size());
  if (!out) throw DataError("write failed: " + path.string());
}

inline Matrix read_snapshot_file(const std::filesystem::path& path,
                                 Eigen::Index n, Eigen::Index s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  char header[kHeaderBytes] = {};
  in.read(header, kHeaderBytes);
  if (!in || std::memcmp(header, kSnapshotMagic, 4) != 0)
    throw DataError("bad snapshot magic: " + path.string());
  std::uint32_t version = 0;
  std::uint64_t fn = 0, fs = 0;
  std::memcpy(&version, header + 4, 4);
  std::memcpy(&fn, header + 8, 8);
  std::memcpy(&fs, header + 16, 8);
  if (version != kSnapshotVersion)
    throw DataError("unsupported snapshot version in " + path.string());
  if (fn != std::uint64_t(n) || fs != std::uint64_t(s))
    throw DataError("snapshot header mismatch in " + path.string() +
                    ": file is " + std::to_string(fn) + "x" +
                    std::to_string(fs) + ", manifest says " +
                    std::to_string(n) + "x" + std::to_string(s));
  const auto expected = std::uintmax_t(kHeaderBytes) +
                        std::uintmax_t(n) * std::uintmax_t(s) * 8;
  if (std::filesystem::file_size(path) != expected)
    throw DataError("snapshot file size mismatch: " + path.string());
  Matrix T(n, s);
  in.read(reinterpret_cast<char*>(T.data()),
          std::streamsize(sizeof(double)) * T.size());
  if (!in) throw DataError("truncated snapshot: " + path.string());
  return T;
}

}  // namespace detail

class DirectoryStore final : public SnapshotStore {
 public:
  DirectoryStore(std::filesystem::path dir, std::vector<std::string> files,
                 Eigen::Index n, Eigen::Index s)
      : dir_(std::move(dir)), files_(std::move(files)), n_(n), s_(s) {}

  Matrix load(Eigen::Index k) const override {
    return detail::read_snapshot_file(dir_ / files_.at(size_t(k)), n_, s_);
  }

  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
  Eigen::Index n_, s_;
};

// Time-indexed ensemble observations T_k in R^{n x s} on a uniform time grid.
struct SnapshotSeries {
  Eigen::Index n = 0;
  Eigen::Index s = 0;
  std::vector<double> times;  // K+1 entries, uniform spacing dt
  double dt = 0.0;
  StateWeights wx;
  SampleWeights wxi;
  std::shared_ptr<const SnapshotStore> store;

  SnapshotSeries(Eigen::Index n_, Eigen::Index s_, std::vector<double> times_,
                 StateWeights wx_, SampleWeights wxi_,
                 std::shared_ptr<const SnapshotStore> store_)
      : n(n_),
        s(s_),
        times(std::move(times_)),
        wx(std::move(wx_)),
        wxi(std::move(wxi_)),
        store(std::move(store_)) {
    if (times.size() < 2) throw DataError("series needs at least 2 snapshots");
    dt = times[1] - times[0];
    if (dt <= 0.0) throw DataError("times must be strictly increasing");
    for (size_t k = 1; k < times.size(); ++k) {
      const double step = times[k] - times[k - 1];
      if (std::abs(step - dt) > 1e-12 * std::max(std::abs(dt), 1.0))
        throw DataError("non-uniform time spacing at index " +
                        std::to_string(k));
    }
    require_dims(wx.size() == n && wxi.size() == s, "SnapshotSeries weights");
  }

  Eigen::Index num_steps() const { return Eigen::Index(times.size()) - 1; }
  Eigen::Index num_snapshots() const { return Eigen::Index(times.size()); }
};

// T_k = T~_k - E[T~_k] 1_{1xs}
inline std::pair<Matrix, Vector> subtract_mean(const Matrix& T,
                                               const SampleWeights& wxi) {
  require_dims(T.cols() == wxi.size(), "subtract_mean");
  Vector mean = T * wxi.w;
  Matrix centered = T;
  centered.colwise() -= mean;
  return {std::move(centered), std::move(mean)};
}

// A contiguous slab of mean-subtracted snapshots around a center index.
struct SnapshotWindow {
  Eigen::Index center = 0;  // global index the derivative is requested at
  Eigen::Index first = 0;   // global index of slots.front()
  std::vector<Matrix> slots;
  double dt = 0.0;

  const Matrix& at(Eigen::Index global) const {
    if (global < first || global >= first + Eigen::Index(slots.size()))
      throw DataError("stencil error: snapshot " + std::to_string(global) +
                      " not in window");
    return slots[size_t(global - first)];
  }
  bool has(Eigen::Index global) const {
    return global >= first && global < first + Eigen::Index(slots.size());
  }
};

namespace detail {

// Fourth-order 5-point stencils; row = leftmost offset relative to center.
// offsets  0..+4, -1..+3, -2..+2, -3..+1, -4..0  (all / 12 dt)
inline const double* fd4_coeffs(int left_offset) {
  static const double table[5][5] = {
      {-25.0, 48.0, -36.0, 16.0, -3.0},  // left_offset =  0
      {-3.0, -10.0, 18.0, -6.0, 1.0},    // left_offset = -1
      {1.0, -8.0, 0.0, 8.0, -1.0},       // left_offset = -2
      {-1.0, 6.0, -18.0, 10.0, 3.0},     // left_offset = -3
      {3.0, -16.0, 36.0, -48.0, 25.0},   // left_offset = -4
  };
  return table[-left_offset];
}

}  // namespace detail

// Entrywise finite-difference estimate of dT/dt at the window's center.
// FD4 uses the central stencil in the interior and shifted one-sided
// 5-point fourth-order stencils near the ends of the available range.
inline Matrix estimate_derivative(const SnapshotWindow& window,
                                  DerivativeScheme scheme,
                                  Eigen::Index last_global_index) {
  const Eigen::Index k = window.center;
  if (window.slots.empty()) throw DataError("stencil error: empty window");
  const double dt = window.dt;

  if (scheme == DerivativeScheme::EE1) {
    if (window.has(k + 1) && k + 1 <= last_global_index)
      return (window.at(k + 1) - window.at(k)) / dt;
    if (window.has(k - 1))  // backward difference at the final step
      return (window.at(k) - window.at(k - 1)) / dt;
    throw DataError("stencil error: EE1 needs two consecutive snapshots");
  }

  // FD4: pick the leftmost offset that fits the global range [0, K]
  int left = -2;
  if (k - 2 < 0) left = int(-k);
  if (k + 2 > last_global_index) left = int(last_global_index - k) - 4;
  if (left < -4 || left > 0 || !window.has(k + left) ||
      !window.has(k + left + 4))
    throw DataError("stencil error: FD4 needs 5 consecutive snapshots");

  const double* c = detail::fd4_coeffs(left);
  Matrix dot = Matrix::Zero(window.slots[0].rows(), window.slots[0].cols());
  for (int i = 0; i < 5; ++i)
    if (c[i] != 0.0) dot += c[i] * window.at(k + left + i);
  return dot / (12.0 * dt);
}

// Sequential streaming pass over a series: yields, for every k in order,
// the mean-subtracted T_k and the finite-difference estimate of dT/dt.
// At most 5 snapshots are resident at any instant.
class SnapshotStream {
 public:
  struct Item {
    Eigen::Index k = 0;
    double t = 0.0;
    Matrix T;     // mean-subtracted
    Matrix Tdot;  // estimate at t_k
  };

  SnapshotStream(const SnapshotSeries& series, DerivativeScheme scheme)
      : series_(series), scheme_(scheme) {
    const Eigen::Index K = series.num_steps();
    if (scheme == DerivativeScheme::FD4 && K < 4)
      throw DataError("FD4 derivatives need at least 5 snapshots");
  }

  bool next(Item& item) {
    const Eigen::Index K = series_.num_steps();
    if (k_ > K) return false;

    const Eigen::Index half = (scheme_ == DerivativeScheme::FD4) ? 2 : 1;
    Eigen::Index first = std::max<Eigen::Index>(0, k_ - half);
    Eigen::Index last = std::min(K, k_ + half);
    if (scheme_ == DerivativeScheme::FD4) {
      // shift the 5-slab into range near the ends
      if (first == 0) last = std::min<Eigen::Index>(K, 4);
      if (last == K) first = std::max<Eigen::Index>(0, K - 4);
    }
    advance_slab(first, last);

    SnapshotWindow window{k_, slab_first_, slab_, series_.dt};
    item.k = k_;
    item.t = series_.times[size_t(k_)];
    item.T = window.at(k_);
    item.Tdot = estimate_derivative(window, scheme_, K);
    ++k_;
    return true;
  }

  // Largest number of snapshots held simultaneously so far.
  size_t peak_resident() const { return peak_resident_; }

 private:
  void advance_slab(Eigen::Index first, Eigen::Index last) {
    while (!slab_.empty() && slab_first_ < first) {
      slab_.erase(slab_.begin());
      ++slab_first_;
    }
    if (slab_.empty()) slab_first_ = first;
    Eigen::Index next_load = slab_first_ + Eigen::Index(slab_.size());
    for (; next_load <= last; ++next_load) {
      try {
        slab_.push_back(subtract_mean(series_.store->load(next_load),
                                      series_.wxi)
                            .first);
      } catch (const Error& e) {
        throw DataError("snapshot " + std::to_string(next_load) +
                        ": " + e.what());
      }
      peak_resident_ = std::max(peak_resident_, slab_.size());
    }
  }

  const SnapshotSeries& series_;
  DerivativeScheme scheme_;
  Eigen::Index k_ = 0;
  Eigen::Index slab_first_ = 0;
  std::vector<Matrix> slab_;
  size_t peak_resident_ = 0;
};

// ---------------------------------------------------------------------------
// Manifest I/O

inline std::filesystem::path write_series(const SnapshotSeries& series,
                                          const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["n"] = series.n;
  manifest["s"] = series.s;
  manifest["dt"] = series.dt;
  manifest["times"] = series.times;
  manifest["wx"] = std::vector<double>(series.wx.w.begin(), series.wx.w.end());
  manifest["wxi"] =
      std::vector<double>(series.wxi.w.begin(), series.wxi.w.end());
  std::vector<std::string> names;
  names.reserve(size_t(series.num_snapshots()));
  for (Eigen::Index k = 0; k < series.num_snapshots(); ++k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "T_%06lld.dbsn", (long long)k);
    names.emplace_back(buf);
    detail::write_snapshot_file(dir / names.back(), series.store->load(k));
  }
  manifest["snapshots"] = names;
  const fs::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write manifest: " + manifest_path.string());
  out << manifest.dump(1) << "\n";
  return manifest_path;
}

inline SnapshotSeries read_series(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest parse error: " + std::string(e.what()));
  }
  try {
    if (manifest.at("version").get<int>() != 1)
      throw DataError("unsupported manifest version");
    const auto n = manifest.at("n").get<Eigen::Index>();
    const auto s = manifest.at("s").get<Eigen::Index>();
    auto times = manifest.at("times").get<std::vector<double>>();
    auto wx_v = manifest.at("wx").get<std::vector<double>>();
    auto wxi_v = manifest.at("wxi").get<std::vector<double>>();
    auto files = manifest.at("snapshots").get<std::vector<std::string>>();
    if (files.size() != times.size())
      throw DataError("manifest: times and snapshots length differ");
    StateWeights wx(Eigen::Map<Vector>(wx_v.data(), Eigen::Index(wx_v.size())));
    SampleWeights wxi(
        Eigen::Map<Vector>(wxi_v.data(), Eigen::Index(wxi_v.size())));
    auto store = std::make_shared<DirectoryStore>(
        manifest_path.parent_path(), std::move(files), n, s);
    return SnapshotSeries(n, s, std::move(times), std::move(wx),
                          std::move(wxi), std::move(store));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest schema error: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw DataError(std::string("manifest weight error: ") + e.what());
  }
}

}  // namespace dbr

#endif  // DBR_SNAPSHOT_SERIES_HPP
