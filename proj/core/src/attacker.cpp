// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/attacker.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "text_util.hpp"
#include "traceobf/error.hpp"
#include "traceobf/parallel.hpp"
#include "traceobf/rng.hpp"

namespace traceobf {

namespace {

constexpr std::string_view kManifest = "manifest.tsv";
constexpr std::string_view kModelHeader = "traceobf-model 1";
constexpr double kPositionCap = 16.0;

double log_ratio(double a, double b) { return std::log((a + 1.0) / (b + 1.0)); }

int round_positive(double v) { return std::max(1, static_cast<int>(std::lround(v))); }

std::string join_labels(const LabelSequence& seq) {
  if (seq.labels.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < seq.labels.size(); ++i) {
    if (i) out += ',';
    out += op_kind_name(seq.labels[i]);
  }
  return out;
}

std::string join_number_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += detail::format_real(values[i]);
  }
  return out;
}

// Line cursor over a model document.
class ModelReader {
 public:
  ModelReader(std::string_view text, std::string_view source)
      : lines_(detail::lines(text)), source_(source) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(source_, static_cast<int>(pos_) + 1, msg);
  }

  std::vector<std::string_view> next(std::string_view keyword) {
    if (pos_ >= lines_.size()) fail(fmt::format("expected '{}' record", keyword));
    auto tok = detail::tokens(lines_[pos_]);
    if (tok.empty() || tok[0] != keyword) fail(fmt::format("expected '{}' record", keyword));
    ++pos_;
    return tok;
  }

  int integer(std::string_view text) const {
    auto v = detail::parse_number<int>(text);
    if (!v) fail(fmt::format("expected integer, got '{}'", text));
    return *v;
  }

  std::vector<double> numbers(const std::vector<std::string_view>& tok, std::size_t expected) const {
    if (tok.size() != expected + 1) fail("wrong number of values");
    std::vector<double> out;
    for (std::size_t i = 1; i < tok.size(); ++i) {
      auto v = detail::parse_number<double>(tok[i]);
      if (!v) fail(fmt::format("bad number '{}'", tok[i]));
      out.push_back(*v);
    }
    return out;
  }

  void header() {
    if (lines_.empty() || lines_[0] != kModelHeader) {
      throw ParseError(source_, 1, "missing 'traceobf-model 1' header");
    }
    pos_ = 1;
  }

  LeakageCase leak() {
    auto tok = next("case");
    if (tok.size() != 2) fail("case needs a name");
    auto c = parse_case(tok[1]);
    if (!c) fail(fmt::format("unknown case '{}'", tok[1]));
    return *c;
  }

  double bandwidth() {
    auto tok = next("bandwidth");
    const std::vector<double> v = numbers(tok, 1);
    if (!(v[0] > 0.0)) fail("bandwidth must be positive");
    return v[0];
  }

  std::vector<int> tree_counts() {
    auto tok = next("members");
    std::vector<int> out;
    for (std::size_t i = 1; i < tok.size(); ++i) out.push_back(integer(tok[i]));
    if (out.empty()) fail("model needs at least one member");
    return out;
  }

  FeatureNorm norm() {
    auto tok = next("norm");
    if (tok.size() != 2) fail("norm needs a column count");
    const auto cols = static_cast<std::size_t>(integer(tok[1]));
    FeatureNorm n;
    n.lo = numbers(next("lo"), cols);
    n.hi = numbers(next("hi"), cols);
    return n;
  }

  RandomForest forest() { return RandomForest::decode(lines_, pos_, source_); }

  void finish() const {
    for (std::size_t i = pos_; i < lines_.size(); ++i) {
      if (!detail::tokens(lines_[i]).empty()) {
        throw ParseError(source_, static_cast<int>(i) + 1, "unexpected trailing record");
      }
    }
  }

 private:
  std::vector<std::string_view> lines_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

std::string model_header(std::string_view family, LeakageCase leak, const std::vector<int>& trees,
                         double bandwidth, const FeatureNorm& norm) {
  std::string out(kModelHeader);
  out += fmt::format("\nfamily {}\ncase {}\nbandwidth {}\nmembers", family, case_name(leak),
                     detail::format_real(bandwidth));
  for (int t : trees) out += fmt::format(" {}", t);
  out += fmt::format("\nnorm {}\nlo {}\nhi {}\n", norm.lo.size(), join_number_list(norm.lo),
                     join_number_list(norm.hi));
  return out;
}

void check_family(ModelReader& r, std::string_view family) {
  auto tok = r.next("family");
  if (tok.size() != 2 || tok[1] != family) r.fail(fmt::format("expected a {} model", family));
}

void check_train_params(const std::vector<int>& counts, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::kConfig, "bandwidth must be positive");
  if (counts.empty()) throw Error(ErrorCode::kConfig, "an ensemble needs at least one member");
  for (int t : counts) {
    if (t < 1) throw Error(ErrorCode::kConfig, "tree counts must be positive");
  }
}

// log2 scale references for the channel targets: the bytes the step writes
// for output channels and the bytes its predecessor wrote for input channels.
// Regressing the offset from them leaves mostly the spatial extent to learn.
std::pair<double, double> dim_anchors(const Trace& trace, std::size_t step, LeakageCase leak) {
  if (case_feature_count(leak) < 3) return {0.0, 0.0};
  const double prev = step > 0 ? trace.steps[step - 1].dram_write() : 0.0;
  (void)prev;
  return {0.0, std::log2(trace.steps[step].dram_write() + 1.0)};
}

struct Rows {
  Dataset2D x;
  std::vector<double> y;
  std::vector<double> y2;
};

}  // namespace

std::vector<int> upstream_kernels(const CompiledModel& model) {
  std::map<int, int> owner;
  for (const Kernel& k : model.kernels) owner[k.anchor()] = k.index;
  std::vector<int> out(model.kernels.size(), -1);
  for (const Kernel& k : model.kernels) {
    const Node& anchor = model.graph.node(k.anchor());
    if (anchor.kind != OpKind::kConv2D || anchor.inputs.empty()) continue;
    int cur = anchor.inputs[0];
    while (true) {
      const Node& n = model.graph.node(cur);
      if (n.kind == OpKind::kConv2D) {
        out[k.index] = owner.at(cur);
        break;
      }
      const bool passes = n.kind == OpKind::kReLU || n.kind == OpKind::kBatchNorm ||
                          n.kind == OpKind::kMaxPool || n.kind == OpKind::kAdd;
      if (!passes || n.inputs.empty()) break;
      cur = n.inputs[0];
    }
  }
  return out;
}

TraceRecord make_record(const CompiledModel& model, LeakageCase leak, const DeviceProfile& device,
                        std::string name) {
  TraceRecord r;
  r.name = std::move(name);
  r.trace = profile(model, leak, device);
  r.truth = label_sequence(model.graph);
  const std::vector<int> up = upstream_kernels(model);
  r.steps.resize(model.kernels.size());
  for (const Kernel& k : model.kernels) {
    const Node& anchor = model.graph.node(k.anchor());
    StepTruth& t = r.steps[k.index];
    if (anchor.kind == OpKind::kConv2D) {
      t.dims = Dims{anchor.attrs.in_channels, anchor.attrs.out_channels};
      t.upstream = up[k.index];
    }
  }
  return r;
}

TraceDataset build_dataset(std::size_t n, const ArchGenConfig& config, LeakageCase leak,
                           std::uint64_t seed, const DeviceProfile& device) {
  if (n == 0) throw Error(ErrorCode::kPrecondition, "a dataset needs at least one architecture");
  check_arch_config(config);
  TraceDataset ds;
  ds.leak = leak;
  ds.records.resize(n);
  parallel_for(n, [&](std::size_t i) {
    ArchGenConfig c = config;
    c.seed = derive_seed(seed, i);
    const CompiledModel m = compile(generate_random_arch(c), BackendHints{}, device);
    ds.records[i] = make_record(m, leak, device, fmt::format("arch_{:05d}", i));
  });
  return ds;
}

TraceDataset restrict_case(const TraceDataset& dataset, LeakageCase leak) {
  if (case_feature_count(leak) > case_feature_count(dataset.leak)) {
    throw Error(ErrorCode::kPrecondition, "cannot widen a dataset's leakage case");
  }
  TraceDataset out = dataset;
  out.leak = leak;
  for (TraceRecord& r : out.records) {
    for (TraceStep& s : r.trace.steps) mask_step(s, leak);
  }
  return out;
}

DatasetSplit split_dataset(const TraceDataset& dataset) {
  const std::size_t held = dataset.records.size() / 5;
  const std::size_t cut = dataset.records.size() - held;
  DatasetSplit s;
  s.train.assign(dataset.records.begin(), dataset.records.begin() + cut);
  s.validation.assign(dataset.records.begin() + cut, dataset.records.end());
  return s;
}

void save_dataset(const TraceDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string manifest = "file\tlabels\tdims\tupstream\n";
  for (const TraceRecord& r : dataset.records) {
    const std::string file = r.name + ".csv";
    save_trace(r.trace, dataset.leak, true, dir / file);
    std::string dims;
    std::string up;
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      if (i) {
        dims += ',';
        up += ',';
      }
      dims += r.steps[i].dims ? fmt::format("{}:{}", r.steps[i].dims->c, r.steps[i].dims->j) : "-";
      up += std::to_string(r.steps[i].upstream);
    }
    if (r.steps.empty()) dims = up = "-";
    manifest += fmt::format("{}\t{}\t{}\t{}\n", file, join_labels(r.truth), dims, up);
  }
  detail::write_file(dir / kManifest, manifest);
}

TraceDataset load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / kManifest;
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIo, fmt::format("no {} in {}", kManifest, dir.string()));
  }
  const std::string text = detail::read_file(path);
  const auto all = detail::lines(text);
  const std::string source = path.string();
  TraceDataset ds;
  bool have_case = false;
  for (std::size_t i = 1; i < all.size(); ++i) {
    const int line = static_cast<int>(i) + 1;
    if (detail::tokens(all[i]).empty()) continue;
    const auto cells = detail::split(all[i], '\t');
    if (cells.size() != 4) throw ParseError(source, line, "manifest rows need 4 columns");
    TraceRecord r;
    const std::string file(cells[0]);
    r.name = std::filesystem::path(file).stem().string();
    TraceDocument doc = load_trace(dir / file);
    if (!have_case) {
      ds.leak = doc.leak;
      have_case = true;
    } else if (doc.leak != ds.leak) {
      throw ParseError(source, line, "traces mix leakage cases");
    }
    r.trace = std::move(doc.trace);
    if (cells[1] != "-") {
      for (auto name : detail::split(cells[1], ',')) {
        auto kind = parse_op_kind(name);
        if (!kind || !is_complex(*kind)) throw ParseError(source, line, fmt::format("bad label '{}'", name));
        r.truth.labels.push_back(*kind);
      }
    }
    if (cells[3] != "-") {
      const auto dims = detail::split(cells[2], ',');
      const auto ups = detail::split(cells[3], ',');
      if (dims.size() != r.trace.steps.size() || ups.size() != dims.size()) {
        throw ParseError(source, line, "per-step columns do not match the trace length");
      }
      for (std::size_t s = 0; s < dims.size(); ++s) {
        StepTruth t;
        if (dims[s] != "-") {
          const auto cj = detail::split(dims[s], ':');
          auto c = cj.size() == 2 ? detail::parse_number<int>(cj[0]) : std::nullopt;
          auto j = cj.size() == 2 ? detail::parse_number<int>(cj[1]) : std::nullopt;
          if (!c || !j) throw ParseError(source, line, fmt::format("bad dims '{}'", dims[s]));
          t.dims = Dims{*c, *j};
        }
        auto u = detail::parse_number<int>(ups[s]);
        if (!u) throw ParseError(source, line, fmt::format("bad upstream '{}'", ups[s]));
        t.upstream = *u;
        r.steps.push_back(t);
      }
    } else if (!r.trace.steps.empty()) {
      throw ParseError(source, line, "per-step columns do not match the trace length");
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::size_t step_feature_count(LeakageCase leak) {
  const std::size_t k = case_feature_count(leak);
  std::size_t n = 5 * k + (k - 1) + 3 + 3;
  if (k >= 3) n += 8;
  if (k >= 9) n += 9;
  return n;
}

std::vector<double> step_features(const Trace& trace, std::size_t step, LeakageCase leak,
                                  double bandwidth) {
  const std::size_t k = case_feature_count(leak);
  const std::size_t n = trace.steps.size();
  static const TraceStep kEmpty{};
  const TraceStep& cur = trace.steps.at(step);
  const TraceStep& prev = step > 0 ? trace.steps[step - 1] : kEmpty;
  const TraceStep& next = step + 1 < n ? trace.steps[step + 1] : kEmpty;
  const TraceStep& prev2 = step > 1 ? trace.steps[step - 2] : kEmpty;
  const TraceStep& prev3 = step > 2 ? trace.steps[step - 3] : kEmpty;
  std::vector<double> f;
  f.reserve(step_feature_count(leak));
  for (std::size_t i = 0; i < k; ++i) {
    f.push_back(cur.features[i]);
    f.push_back(prev.features[i]);
    f.push_back(next.features[i]);
    f.push_back(log_ratio(cur.features[i], prev.features[i]));
    f.push_back(log_ratio(cur.features[i], next.features[i]));
  }
  for (std::size_t i = 1; i < k; ++i) f.push_back(log_ratio(cur.features[i], cur.features[0]));
  f.push_back(std::min(static_cast<double>(step), kPositionCap));
  f.push_back(std::min(static_cast<double>(n - 1 - step), kPositionCap));
  f.push_back(n > 1 ? static_cast<double>(step) / static_cast<double>(n - 1) : 0.0);

  // The cheapest step of a trace approximates the fixed per-kernel cost.
  double base = cur.cycles();
  for (const TraceStep& s : trace.steps) base = std::min(base, s.cycles());
  auto net = [&](const TraceStep& s) { return std::max(s.cycles() - base, 0.0); };
  f.push_back(net(cur));
  f.push_back(log_ratio(net(cur), net(prev)));
  f.push_back(log_ratio(net(cur), net(next)));
  if (k >= 3) {
    f.push_back(log_ratio(cur.dram_read(), cur.dram_write()));
    f.push_back(log_ratio(net(cur), cur.dram_write()));
    f.push_back(log_ratio(cur.dram_read(), prev.dram_write()));
    f.push_back(log_ratio(cur.dram_write(), prev.dram_write()));
    f.push_back(log_ratio(net(cur), prev.dram_write()));
    f.push_back(log_ratio(cur.dram_read(), prev2.dram_write()));
    f.push_back(log_ratio(cur.dram_read(), prev3.dram_write()));
    f.push_back(log_ratio(next.dram_read(), cur.dram_write()));
  }
  if (k >= 9) {
    // Work estimate: busy cycles scaled by the reported efficiency.
    const double busy = net(cur) - (cur.dram_read() + cur.dram_write()) / bandwidth;
    const double work = std::max(busy, 0.0) * cur.features[4] / 100.0;
    f.push_back(std::log1p(work));
    f.push_back(log_ratio(work, cur.dram_write()));
    f.push_back(log_ratio(work, prev.dram_write()));
    f.push_back(std::log1p(work) - std::log1p(cur.dram_write()) - std::log1p(prev.dram_write()));
    f.push_back(log_ratio(cur.features[3], cur.dram_write()));
    f.push_back(log_ratio(cur.features[3], work));
    f.push_back(log_ratio(cur.features[6], cur.dram_write()));
    f.push_back(std::log1p(work) - std::log1p(cur.dram_write()) - std::log1p(prev2.dram_write()));
    f.push_back(std::log1p(work) - std::log1p(cur.dram_write()) - std::log1p(prev3.dram_write()));
  }
  return f;
}

FeatureNorm FeatureNorm::fit(const Dataset2D& rows) {
  FeatureNorm n;
  n.lo.assign(rows.cols, 0.0);
  n.hi.assign(rows.cols, 0.0);
  for (std::size_t c = 0; c < rows.cols; ++c) {
    double lo = rows.rows() ? rows.row(0)[c] : 0.0;
    double hi = lo;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      lo = std::min(lo, rows.row(r)[c]);
      hi = std::max(hi, rows.row(r)[c]);
    }
    n.lo[c] = lo;
    n.hi[c] = hi;
  }
  return n;
}

void FeatureNorm::apply(std::vector<double>& row) const {
  if (row.size() != lo.size()) throw Error(ErrorCode::kPrecondition, "feature width differs from model");
  for (std::size_t c = 0; c < row.size(); ++c) {
    const double span = hi[c] - lo[c];
    row[c] = span > 0.0 ? (row[c] - lo[c]) / span : 0.0;
  }
}

void FeatureNorm::apply(Dataset2D& rows) const {
  std::vector<double> row(rows.cols);
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    std::copy_n(rows.row(r), rows.cols, row.begin());
    apply(row);
    std::copy(row.begin(), row.end(), rows.values.begin() + r * rows.cols);
  }
}

int step_class(const std::optional<OpKind>& label) {
  if (!label) return 0;
  switch (*label) {
    case OpKind::kConv2D: return 1;
    case OpKind::kLinear: return 2;
    case OpKind::kMaxPool: return 3;
    case OpKind::kSoftMax: return 4;
    default: return 0;
  }
}

std::optional<OpKind> class_label(int cls) {
  switch (cls) {
    case 1: return OpKind::kConv2D;
    case 2: return OpKind::kLinear;
    case 3: return OpKind::kMaxPool;
    case 4: return OpKind::kSoftMax;
    default: return std::nullopt;
  }
}

SeqPredictor SeqPredictor::train(const std::vector<TraceRecord>& records, LeakageCase leak,
                                 const SeqTrainParams& params) {
  check_train_params(params.tree_counts, params.bandwidth);
  Rows rows;
  for (const TraceRecord& r : records) {
    for (std::size_t s = 0; s < r.trace.steps.size(); ++s) {
      rows.x.push_row(step_features(r.trace, s, leak, params.bandwidth));
      rows.y.push_back(step_class(r.trace.steps[s].label));
    }
  }
  if (rows.y.empty()) throw Error(ErrorCode::kEmptyDataset, "no trace steps to train on");
  SeqPredictor p;
  p.leak_ = leak;
  p.tree_counts_ = params.tree_counts;
  p.bandwidth_ = params.bandwidth;
  p.norm_ = FeatureNorm::fit(rows.x);
  p.norm_.apply(rows.x);
  for (std::size_t m = 0; m < params.tree_counts.size(); ++m) {
    ForestParams fp;
    fp.task = TreeTask::kClassification;
    fp.trees = params.tree_counts[m];
    fp.max_depth = params.max_depth;
    fp.num_classes = kStepClasses;
    fp.seed = derive_seed(params.seed, m);
    p.members_.push_back(RandomForest::fit(rows.x, rows.y, fp));
  }
  return p;
}

std::vector<std::optional<OpKind>> SeqPredictor::classify(const Trace& trace, std::size_t member) const {
  const RandomForest& f = members_.at(member);
  std::vector<std::optional<OpKind>> out;
  out.reserve(trace.steps.size());
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    std::vector<double> x = step_features(trace, s, leak_, bandwidth_);
    norm_.apply(x);
    out.push_back(class_label(static_cast<int>(f.predict(x.data()))));
  }
  return out;
}

LabelSequence SeqPredictor::predict(const Trace& trace, std::size_t member) const {
  LabelSequence seq;
  for (const auto& label : classify(trace, member)) {
    if (label) seq.labels.push_back(*label);
  }
  return seq;
}

std::string SeqPredictor::encode() const {
  std::string out = model_header("seq", leak_, tree_counts_, bandwidth_, norm_);
  for (const RandomForest& f : members_) out += f.encode();
  return out;
}

SeqPredictor SeqPredictor::decode(std::string_view text, std::string_view source) {
  ModelReader r(text, source);
  r.header();
  check_family(r, "seq");
  SeqPredictor p;
  p.leak_ = r.leak();
  p.bandwidth_ = r.bandwidth();
  p.tree_counts_ = r.tree_counts();
  p.norm_ = r.norm();
  if (p.norm_.lo.size() != step_feature_count(p.leak_)) r.fail("norm width does not match the case");
  for (std::size_t m = 0; m < p.tree_counts_.size(); ++m) {
    p.members_.push_back(r.forest());
    if (p.members_.back().task() != TreeTask::kClassification) r.fail("expected a classification forest");
  }
  r.finish();
  return p;
}

DimRegressor DimRegressor::train(const std::vector<TraceRecord>& records, LeakageCase leak,
                                 const DimTrainParams& params) {
  check_train_params(params.tree_counts, params.bandwidth);
  Rows rows;
  for (const TraceRecord& r : records) {
    for (std::size_t s = 0; s < r.steps.size(); ++s) {
      if (!r.steps[s].dims) continue;
      rows.x.push_row(step_features(r.trace, s, leak, params.bandwidth));
      const auto [ac, aj] = dim_anchors(r.trace, s, leak);
      rows.y.push_back(std::log2(static_cast<double>(r.steps[s].dims->c)) - ac);
      rows.y2.push_back(std::log2(static_cast<double>(r.steps[s].dims->j)) - aj);
    }
  }
  if (rows.y.empty()) throw Error(ErrorCode::kEmptyDataset, "no Conv2D steps to train on");
  DimRegressor d;
  d.leak_ = leak;
  d.tree_counts_ = params.tree_counts;
  d.bandwidth_ = params.bandwidth;
  d.norm_ = FeatureNorm::fit(rows.x);
  d.norm_.apply(rows.x);
  for (std::size_t m = 0; m < params.tree_counts.size(); ++m) {
    ForestParams fp;
    fp.task = TreeTask::kRegression;
    fp.trees = params.tree_counts[m];
    fp.max_depth = params.max_depth;
    fp.seed = derive_seed(params.seed, 2 * m);
    d.c_.push_back(RandomForest::fit(rows.x, rows.y, fp));
    fp.seed = derive_seed(params.seed, 2 * m + 1);
    d.j_.push_back(RandomForest::fit(rows.x, rows.y2, fp));
  }
  return d;
}

Dims DimRegressor::predict_step(const Trace& trace, std::size_t step, std::size_t member) const {
  std::vector<double> x = step_features(trace, step, leak_, bandwidth_);
  norm_.apply(x);
  const auto [ac, aj] = dim_anchors(trace, step, leak_);
  return Dims{round_positive(std::exp2(ac + c_.at(member).predict(x.data()))),
              round_positive(std::exp2(aj + j_.at(member).predict(x.data())))};
}

std::string DimRegressor::encode() const {
  std::string out = model_header("dim", leak_, tree_counts_, bandwidth_, norm_);
  for (std::size_t m = 0; m < c_.size(); ++m) {
    out += c_[m].encode();
    out += j_[m].encode();
  }
  return out;
}

DimRegressor DimRegressor::decode(std::string_view text, std::string_view source) {
  ModelReader r(text, source);
  r.header();
  check_family(r, "dim");
  DimRegressor d;
  d.leak_ = r.leak();
  d.bandwidth_ = r.bandwidth();
  d.tree_counts_ = r.tree_counts();
  d.norm_ = r.norm();
  if (d.norm_.lo.size() != step_feature_count(d.leak_)) r.fail("norm width does not match the case");
  for (std::size_t m = 0; m < d.tree_counts_.size(); ++m) {
    d.c_.push_back(r.forest());
    d.j_.push_back(r.forest());
    if (d.c_.back().task() != TreeTask::kRegression || d.j_.back().task() != TreeTask::kRegression) {
      r.fail("expected a regression forest");
    }
  }
  r.finish();
  return d;
}

Dims predict_dims(const DimRegressor& model, const Trace& trace, std::size_t step, int upstream,
                  std::size_t member) {
  Dims d = model.predict_step(trace, step, member);
  if (upstream >= 0 && static_cast<std::size_t>(upstream) < trace.steps.size()) {
    const int produced = model.predict_step(trace, static_cast<std::size_t>(upstream), member).j;
    if (produced != d.c) d.c = round_positive(0.5 * (produced + d.c));
  }
  return d;
}

double validation_ler(const SeqPredictor& model, const std::vector<TraceRecord>& records) {
  double total = 0.0;
  std::size_t count = 0;
  for (const TraceRecord& r : records) {
    if (r.truth.labels.empty()) continue;
    for (std::size_t m = 0; m < model.members(); ++m) {
      total += ler(model.predict(r.trace, m), r.truth);
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::kEmptyDataset, "no records with a non-empty truth");
  return total / static_cast<double>(count);
}

double validation_der(const DimRegressor& model, const std::vector<TraceRecord>& records) {
  double total = 0.0;
  std::size_t count = 0;
  for (const TraceRecord& r : records) {
    for (std::size_t s = 0; s < r.steps.size(); ++s) {
      if (!r.steps[s].dims) continue;
      for (std::size_t m = 0; m < model.members(); ++m) {
        total += der(predict_dims(model, r.trace, s, r.steps[s].upstream, m), *r.steps[s].dims);
        ++count;
      }
    }
  }
  if (count == 0) throw Error(ErrorCode::kEmptyDataset, "no Conv2D steps to score");
  return total / static_cast<double>(count);
}

}  // namespace traceobf
