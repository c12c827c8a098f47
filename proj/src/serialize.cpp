#include "fedcl/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <type_traits>

namespace fedcl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "FEDCL1";

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(v); }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename T>
  T get() {
    if (in_.size() < sizeof(T)) throw FormatError("truncated checkpoint");
    T v;
    std::memcpy(&v, in_.data(), sizeof(T));
    in_.remove_prefix(sizeof(T));
    return v;
  }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  std::string_view bytes(std::size_t n) {
    if (in_.size() < n) throw FormatError("truncated checkpoint");
    auto s = in_.substr(0, n);
    in_.remove_prefix(n);
    return s;
  }
  // Element count bounded by remaining bytes.
  std::size_t count(std::size_t elem_size) {
    const auto n = u64();
    if (elem_size != 0 && n > in_.size() / elem_size) throw FormatError("section count exceeds payload");
    return static_cast<std::size_t>(n);
  }
  bool done() const { return in_.empty(); }

 private:
  std::string_view in_;
};

void put_stack(Writer& w, const DenseStack& s) {
  w.u64(s.layer_count());
  for (const auto& l : s.layers()) {
    w.u64(l.in);
    w.u64(l.out);
  }
  w.u64(s.size());
  for (double v : s.values()) w.f64(v);
}

DenseStack get_stack(Reader& r) {
  const auto layers = r.count(16);
  if (layers == 0) throw FormatError("parameter block with zero layers");
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < layers; ++i) {
    const auto in = r.u64();
    const auto out = r.u64();
    if (i == 0) widths.push_back(in);
    else if (widths.back() != in) throw FormatError("layer widths do not chain");
    widths.push_back(out);
  }
  DenseStack s(widths);
  const auto n = r.count(8);
  if (n != s.size()) throw FormatError("parameter count does not match layer shapes");
  for (auto& v : s.values()) v = r.f64();
  return s;
}

std::string model_payload(const ModelParams& m) {
  Writer w;
  w.u64(m.split_index);
  put_stack(w, m.stack);
  return w.take();
}

ModelParams decode_model(std::string_view p) {
  Reader r(p);
  const auto split = r.u64();
  auto stack = get_stack(r);
  try {
    return ModelParams(std::move(stack), split);
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid model section: ") + e.what());
  }
}

std::string generator_payload(const GeneratorParams& g) {
  Writer w;
  w.u64(g.num_classes);
  w.u64(g.noise_dim);
  put_stack(w, g.stack);
  return w.take();
}

GeneratorParams decode_generator(std::string_view p) {
  Reader r(p);
  const auto classes = r.u64();
  const auto noise = r.u64();
  auto stack = get_stack(r);
  try {
    return GeneratorParams(std::move(stack), classes, noise);
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid generator section: ") + e.what());
  }
}

std::string u64_payload(std::uint64_t v) {
  Writer w;
  w.u64(v);
  return w.take();
}

std::string f64_payload(double v) {
  Writer w;
  w.f64(v);
  return w.take();
}

std::string counts_payload(const std::vector<std::uint64_t>& c) {
  Writer w;
  w.u64(c.size());
  for (auto v : c) w.u64(v);
  return w.take();
}

std::vector<std::uint64_t> decode_counts(Reader& r) {
  std::vector<std::uint64_t> c(r.count(8));
  for (auto& v : c) v = r.u64();
  return c;
}

using Sections = std::vector<std::pair<std::string, std::string>>;

std::string frame(char kind, const Sections& sections) {
  Writer w;
  w.bytes(kMagic);
  w.put<char>(kind);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [tag, payload] : sections) {
    w.bytes(tag);
    w.u64(payload.size());
    w.bytes(payload);
  }
  return w.take();
}

std::map<std::string, std::string_view, std::less<>> unframe(std::string_view bytes, char kind) {
  Reader r(bytes);
  if (r.bytes(kMagic.size()) != kMagic) throw FormatError("bad checkpoint magic");
  const char k = r.get<char>();
  if (k != kind) throw FormatError(std::string("unexpected record kind '") + k + "'");
  const auto n = r.get<std::uint32_t>();
  std::map<std::string, std::string_view, std::less<>> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string tag(r.bytes(4));
    const auto len = r.u64();
    out[tag] = r.bytes(static_cast<std::size_t>(len));
  }
  if (!r.done()) throw FormatError("trailing bytes after last section");
  return out;
}

std::string_view need(const std::map<std::string, std::string_view, std::less<>>& s,
                      std::string_view tag) {
  auto it = s.find(tag);
  if (it == s.end()) throw FormatError("missing section " + std::string(tag));
  return it->second;
}

}  // namespace

std::string encode_gmm(const GmmParams& gmm) {
  Writer w;
  w.u64(gmm.size());
  for (const auto& c : gmm.components) {
    w.f64(c.weight);
    w.f64(c.mean);
    w.f64(c.variance);
  }
  return w.take();
}

GmmParams decode_gmm(std::string_view payload) {
  Reader r(payload);
  GmmParams g;
  g.components.resize(r.count(24));
  for (auto& c : g.components) {
    c.weight = r.f64();
    c.mean = r.f64();
    c.variance = r.f64();
  }
  return g;
}

std::string encode_report(const ClientReport& rep) {
  Sections s{{"CLID", u64_payload(rep.client_id)},
             {"MODL", model_payload(rep.model)},
             {"GMMP", encode_gmm(rep.gmm)},
             {"LCNT", counts_payload(rep.label_counter)},
             {"STEP", u64_payload(rep.local_steps_run)},
             {"LOSS", f64_payload(rep.mean_local_loss)}};
  return frame('R', s);
}

ClientReport decode_report(std::string_view bytes) {
  const auto s = unframe(bytes, 'R');
  ClientReport rep;
  rep.client_id = Reader(need(s, "CLID")).u64();
  rep.model = decode_model(need(s, "MODL"));
  rep.gmm = decode_gmm(need(s, "GMMP"));
  Reader lc(need(s, "LCNT"));
  rep.label_counter = decode_counts(lc);
  rep.local_steps_run = Reader(need(s, "STEP")).u64();
  rep.mean_local_loss = Reader(need(s, "LOSS")).f64();
  return rep;
}

std::string encode_broadcast(const Broadcast& b) {
  Sections s{{"MODL", model_payload(b.model)}};
  if (b.generator) s.emplace_back("GENR", generator_payload(*b.generator));
  {
    Writer w;
    w.u64(b.prior.counts.size());
    for (auto c : b.prior.counts) w.u64(c);
    for (double p : b.prior.probabilities) w.f64(p);
    s.emplace_back("PRIO", w.take());
  }
  if (b.pool) {
    Writer w;
    w.u64(b.pool->per_client_counts.size());
    for (auto c : b.pool->per_client_counts) w.u64(c);
    w.u64(b.pool->sorted_samples.size());
    for (double v : b.pool->sorted_samples) w.f64(v);
    s.emplace_back("POOL", w.take());
  }
  {
    Writer w;
    w.u64(b.state_index);
    w.put<std::uint8_t>(b.threshold ? 1 : 0);
    w.f64(b.threshold.value_or(0.0));
    s.emplace_back("SYNC", w.take());
  }
  return frame('B', s);
}

Broadcast decode_broadcast(std::string_view bytes) {
  const auto s = unframe(bytes, 'B');
  Broadcast b;
  b.model = decode_model(need(s, "MODL"));
  if (auto it = s.find("GENR"); it != s.end()) b.generator = decode_generator(it->second);
  {
    Reader r(need(s, "PRIO"));
    const auto n = r.count(16);
    b.prior.counts.resize(n);
    for (auto& c : b.prior.counts) c = r.u64();
    b.prior.probabilities.resize(n);
    for (auto& p : b.prior.probabilities) p = r.f64();
  }
  if (auto it = s.find("POOL"); it != s.end()) {
    Reader r(it->second);
    GlobalPool pool;
    pool.per_client_counts = decode_counts(r);
    pool.sorted_samples.resize(r.count(8));
    for (auto& v : pool.sorted_samples) v = r.f64();
    b.pool = std::move(pool);
  }
  {
    Reader r(need(s, "SYNC"));
    b.state_index = r.u64();
    const bool has = r.get<std::uint8_t>() != 0;
    const double t = r.f64();
    if (has) b.threshold = t;
  }
  return b;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fedcl
