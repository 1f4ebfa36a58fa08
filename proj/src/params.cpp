#include "ampe/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace ampe {

namespace {
constexpr char kMagic[4] = {'A', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
  uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

void write_mat(std::ofstream& out, const Mat& m) {
  write_pod<uint64_t>(out, static_cast<uint64_t>(m.rows()));
  write_pod<uint64_t>(out, static_cast<uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Mat read_mat(std::ifstream& in) {
  uint64_t r = read_pod<uint64_t>(in);
  uint64_t c = read_pod<uint64_t>(in);
  Mat m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}
}  // namespace

Mat& ParamStore::add(const std::string& name, Mat init) {
  require(index_.count(name) == 0, "duplicate parameter name: " + name);
  Entry e;
  e.name = name;
  e.value = std::move(init);
  index_[name] = static_cast<int>(entries_.size());
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

Mat& ParamStore::value(const std::string& name) {
  return entries_[index_of(name)].value;
}

const Mat& ParamStore::value(const std::string& name) const {
  return entries_[index_of(name)].value;
}

int ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter: " + name);
  return it->second;
}

long ParamStore::num_scalars() const {
  long n = 0;
  for (const auto& e : entries_) n += static_cast<long>(e.value.size());
  return n;
}

Grads ParamStore::zero_grads() const {
  Grads out;
  out.g.reserve(entries_.size());
  for (const auto& e : entries_)
    out.g.push_back(Mat::Zero(e.value.rows(), e.value.cols()));
  return out;
}

void ParamStore::adam_step(const Grads& grads, double lr) {
  require(lr >= 0.0, "adam_step: lr must be >= 0");
  require(grads.g.size() == entries_.size(), "adam_step: gradient count mismatch");
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (size_t i = 0; i < entries_.size(); ++i) {
    Entry& e = entries_[i];
    const Mat& g = grads.g[i];
    require(g.rows() == e.value.rows() && g.cols() == e.value.cols(),
            "adam_step: shape mismatch for " + e.name);
    if (!e.adam_ready) {
      e.m = Mat::Zero(e.value.rows(), e.value.cols());
      e.v = Mat::Zero(e.value.rows(), e.value.cols());
      e.adam_ready = true;
    }
    e.m = beta1 * e.m + (1.0 - beta1) * g;
    e.v = beta2 * e.v + (1.0 - beta2) * g.cwiseProduct(g);
    e.value.array() -=
        lr * (e.m.array() / bc1) / ((e.v.array() / bc2).sqrt() + eps);
  }
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  write_pod<int64_t>(out, step_);
  write_pod<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    write_string(out, e.name);
    write_mat(out, e.value);
    write_pod<uint8_t>(out, e.adam_ready ? 1 : 0);
    if (e.adam_ready) {
      write_mat(out, e.m);
      write_mat(out, e.v);
    }
  }
  write_pod<uint32_t>(out, static_cast<uint32_t>(constants_.size()));
  for (const auto& [name, values] : constants_) {
    write_string(out, name);
    write_pod<uint64_t>(out, static_cast<uint64_t>(values.size()));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(sizeof(int64_t) * values.size()));
  }
  require(out.good(), "checkpoint write failed: " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  require(std::memcmp(magic, kMagic, 4) == 0, "not a checkpoint file: " + path);
  uint32_t version = read_pod<uint32_t>(in);
  require(version == kVersion, "unsupported checkpoint version");
  ParamStore ps;
  ps.step_ = read_pod<int64_t>(in);
  uint32_t n = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = read_string(in);
    Mat value = read_mat(in);
    Entry e;
    e.name = name;
    e.value = std::move(value);
    e.adam_ready = read_pod<uint8_t>(in) != 0;
    if (e.adam_ready) {
      e.m = read_mat(in);
      e.v = read_mat(in);
    }
    ps.index_[name] = static_cast<int>(ps.entries_.size());
    ps.entries_.push_back(std::move(e));
  }
  uint32_t nc = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < nc; ++i) {
    std::string name = read_string(in);
    uint64_t m = read_pod<uint64_t>(in);
    std::vector<int64_t> values(m);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(sizeof(int64_t) * m));
    ps.constants_[name] = std::move(values);
  }
  require(in.good(), "truncated checkpoint: " + path);
  return ps;
}

uint64_t ParamStore::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_bytes = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  mix_bytes(&step_, sizeof(step_));
  for (const auto& e : entries_) {
    mix_bytes(e.name.data(), e.name.size());
    mix_bytes(e.value.data(), sizeof(double) * e.value.size());
  }
  for (const auto& [name, values] : constants_) {
    mix_bytes(name.data(), name.size());
    mix_bytes(values.data(), sizeof(int64_t) * values.size());
  }
  return h;
}

Mat xavier_init(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store) : store_(&store) {
  vars_.reserve(store.count());
  for (int i = 0; i < store.count(); ++i) {
    vars_.push_back(tape.leaf(store.value_at(i), true));
    names_[store.name(i)] = i;
  }
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = names_.find(name);
  require(it != names_.end(), "unbound parameter: " + name);
  return vars_[it->second];
}

void BoundParams::accumulate_grads(Tape& tape, Grads& out) const {
  for (size_t i = 0; i < vars_.size(); ++i) out.g[i] += tape.grad(vars_[i]);
}

GradReport check_gradients(
    const std::function<double(ParamStore&, Grads*)>& loss_fn, ParamStore& params,
    double h) {
  Grads analytic = params.zero_grads();
  loss_fn(params, &analytic);
  GradReport report;
  for (int p = 0; p < params.count(); ++p) {
    Mat& value = params.value_at(p);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double orig = value.data()[i];
      value.data()[i] = orig + h;
      const double up = loss_fn(params, nullptr);
      value.data()[i] = orig - h;
      const double down = loss_fn(params, nullptr);
      value.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic.g[p].data()[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
    report.max_rel_err[params.name(p)] = worst;
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

}  // namespace ampe
