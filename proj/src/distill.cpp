// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "resprune/log.hpp"
#include "resprune/schedule.hpp"

namespace resprune {

void DistillConfig::validate() const {
  if (!(alpha >= 0 && alpha <= 1)) throw InvalidArgument("distill: alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (!(temperature > 0) || !std::isfinite(temperature)) throw InvalidArgument("distill: temperature must be positive");
}

namespace {

template <typename T>
void check_logits(const Var<T>& v, std::size_t rows, const char* op) {
  if (v.shape().size() != 2) throw ShapeError(std::string(op) + ": logits must be [N, K], got " + shape_str(v.shape()));
  if (v.shape()[0] == 0) throw InvalidArgument(std::string(op) + ": empty batch");
  if (v.shape()[0] != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(v.shape()[0]) + " logit rows for " + std::to_string(rows) +
                     " targets");
  }
}

template <typename T>
Tensor<T> softmax_const(const Tensor<T>& logits, double inv_t, Tensor<T>* log_out) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p({n, k});
  if (log_out) *log_out = Tensor<T>({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, inv_t * static_cast<double>(logits[r * k + c]));
    double z = 0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(inv_t * static_cast<double>(logits[r * k + c]) - mx);
    const double lz = std::log(z);
    for (std::size_t c = 0; c < k; ++c) {
      const double l = inv_t * static_cast<double>(logits[r * k + c]) - mx - lz;
      p[r * k + c] = static_cast<T>(std::exp(l));
      if (log_out) (*log_out)[r * k + c] = static_cast<T>(l);
    }
  }
  return p;
}

template <typename T>
Tensor<T> one_hot_t(std::span<const int> labels, std::size_t k) {
  Tensor<T> y({labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InvalidArgument("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(k) + " classes");
    }
    y[i * k + static_cast<std::size_t>(labels[i])] = T(1);
  }
  return y;
}

}  // namespace

template <typename T>
Var<T> soft_cross_entropy(Tape<T>& tape, Var<T> logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs targets " + shape_str(targets.shape()));
  }
  const T inv_n = T(1) / static_cast<T>(std::max<std::size_t>(logits.shape()[0], 1));
  return ops::scale(ops::sum(ops::mul(tape.constant(targets), ops::log_softmax(logits))), -inv_n);
}

template <typename T>
LossParts<T> step1_loss(Tape<T>& tape, Var<T> student, const Tensor<T>& teacher, const Tensor<T>& soft_labels,
                        const DistillConfig& cfg) {
  cfg.validate();
  if (cfg.step != DistillStep::kStep1) throw InvalidArgument("step1_loss: config is for step 2");
  check_logits(student, teacher.rank() == 2 ? teacher.dim(0) : 0, "step1_loss");
  if (teacher.shape() != student.shape() || soft_labels.shape() != student.shape()) {
    throw ShapeError("step1_loss: student " + shape_str(student.shape()) + ", teacher " + shape_str(teacher.shape()) +
                     ", labels " + shape_str(soft_labels.shape()));
  }
  const std::size_t n = teacher.dim(0), k = teacher.dim(1);
  const T inv_t = static_cast<T>(1.0 / cfg.temperature);
  const T inv_n = T(1) / static_cast<T>(n);
  Tensor<T> log_p;
  const Tensor<T> p = softmax_const(teacher, 1.0 / cfg.temperature, &log_p);
  // sum p log p is a constant; entries with p = 0 contribute nothing.
  double neg_entropy = 0;
  for (std::size_t i = 0; i < n * k; ++i) {
    if (p[i] > 0) neg_entropy += static_cast<double>(p[i]) * static_cast<double>(log_p[i]);
  }
  neg_entropy /= static_cast<double>(n);
  Var<T> log_q = ops::log_softmax(ops::scale(student, inv_t));
  Var<T> cross = ops::scale(ops::sum(ops::mul(tape.constant(p), log_q)), -inv_n);
  Var<T> kl = ops::add(cross, tape.constant(Tensor<T>::scalar(static_cast<T>(neg_entropy))));
  Var<T> ce = soft_cross_entropy(tape, student, soft_labels);
  const T wk = static_cast<T>(cfg.alpha * cfg.temperature * cfg.temperature);
  const T wc = static_cast<T>(1.0 - cfg.alpha);
  LossParts<T> out{ops::add(ops::scale(kl, wk), ops::scale(ce, wc))};
  out.kl = static_cast<double>(kl.value().item());
  out.ce = static_cast<double>(ce.value().item());
  return out;
}

template <typename T>
LossParts<T> step2_loss(Tape<T>& tape, Var<T> student, Var<T> stored, std::span<const int> labels,
                        const DistillConfig& cfg) {
  cfg.validate();
  if (cfg.step != DistillStep::kStep2) throw InvalidArgument("step2_loss: config is for step 1");
  check_logits(student, labels.size(), "step2_loss");
  if (stored.shape() != student.shape()) {
    throw ShapeError("step2_loss: student " + shape_str(student.shape()) + " vs stored " + shape_str(stored.shape()));
  }
  const std::size_t n = labels.size(), k = student.shape()[1];
  const T inv_t = static_cast<T>(1.0 / cfg.temperature);
  const T inv_n = T(1) / static_cast<T>(n);
  Var<T> sv = ops::scale(student, inv_t);
  Var<T> q = ops::softmax(sv);
  Var<T> kl = ops::scale(ops::sum(ops::mul(q, ops::sub(ops::log_softmax(sv), ops::log_softmax(ops::scale(stored, inv_t))))),
                         inv_n);
  Var<T> ce = soft_cross_entropy(tape, student, one_hot_t<T>(labels, k));
  const T wk = static_cast<T>(cfg.alpha * cfg.temperature * cfg.temperature);
  const T wc = static_cast<T>(1.0 - cfg.alpha);
  LossParts<T> out{ops::add(ops::scale(kl, wk), ops::scale(ce, wc))};
  out.kl = static_cast<double>(kl.value().item());
  out.ce = static_cast<double>(ce.value().item());
  return out;
}

#define RESPRUNE_INSTANTIATE(T)                                                                                 \
  template Var<T> soft_cross_entropy<T>(Tape<T>&, Var<T>, const Tensor<T>&);                                    \
  template LossParts<T> step1_loss<T>(Tape<T>&, Var<T>, const Tensor<T>&, const Tensor<T>&, const DistillConfig&); \
  template LossParts<T> step2_loss<T>(Tape<T>&, Var<T>, Var<T>, std::span<const int>, const DistillConfig&);
RESPRUNE_INSTANTIATE(float)
RESPRUNE_INSTANTIATE(double)
#undef RESPRUNE_INSTANTIATE

// --- logit store ---------------------------------------------------------------

namespace {
constexpr char kStoreMagic[8] = {'R', 'P', 'L', 'O', 'G', 'I', 'T', '1'};
}

LogitStore::LogitStore(Tensor<float> logits, double eta) : logits_(std::move(logits)), eta_(eta) {
  if (logits_.rank() != 2) throw ShapeError("logit store: expects [records, classes], got " + shape_str(logits_.shape()));
  if (!(eta >= 0) || !std::isfinite(eta)) throw InvalidArgument("logit store: eta must be >= 0");
}

Tensor<float> LogitStore::gather(std::span<const std::size_t> ids) const {
  const std::size_t k = class_count();
  Tensor<float> out({ids.size(), k});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= size()) throw InvalidArgument("logit store: record " + std::to_string(ids[i]) + " is missing");
    std::copy_n(logits_.ptr() + ids[i] * k, k, out.ptr() + i * k);
  }
  return out;
}

std::size_t LogitStore::update(std::span<const std::size_t> ids, const Tensor<float>& grads) {
  const std::size_t k = class_count();
  if (grads.shape() != Shape{ids.size(), k}) {
    throw ShapeError("logit store: gradient shape " + shape_str(grads.shape()) + " for " + std::to_string(ids.size()) +
                     " records");
  }
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= size()) throw InvalidArgument("logit store: record " + std::to_string(ids[i]) + " is missing");
    const float* g = grads.ptr() + i * k;
    if (!std::all_of(g, g + k, [](float v) { return std::isfinite(v); })) {
      ++skipped;
      logger()->warn("logit store: non-finite gradient for record {}, update skipped", ids[i]);
      continue;
    }
    float* u = logits_.ptr() + ids[i] * k;
    for (std::size_t c = 0; c < k; ++c) u[c] = static_cast<float>(u[c] - eta_ * g[c]);
  }
  return skipped;
}

void LogitStore::write(std::ostream& out) const {
  out.write(kStoreMagic, sizeof kStoreMagic);
  const auto k = static_cast<std::uint32_t>(class_count());
  out.write(reinterpret_cast<const char*>(&k), sizeof k);
  out.write(reinterpret_cast<const char*>(&eta_), sizeof eta_);
  out.write(reinterpret_cast<const char*>(&epoch_), sizeof epoch_);
  write_tensor(out, logits_);
  if (!out) throw IoError("logit store: write failed");
}

LogitStore LogitStore::read(std::istream& in) {
  char magic[sizeof kStoreMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kStoreMagic, sizeof magic) != 0) {
    throw FormatError("logit store: bad magic at byte 0");
  }
  std::uint32_t k = 0;
  double eta = 0;
  std::uint64_t epoch = 0;
  if (!in.read(reinterpret_cast<char*>(&k), sizeof k) || !in.read(reinterpret_cast<char*>(&eta), sizeof eta) ||
      !in.read(reinterpret_cast<char*>(&epoch), sizeof epoch)) {
    throw FormatError("logit store: truncated header");
  }
  Tensor<float> logits = read_tensor<float>(in);
  if (logits.rank() != 2 || logits.dim(1) != k) throw FormatError("logit store: payload disagrees with class count");
  LogitStore s(std::move(logits), eta);
  s.epoch_ = epoch;
  return s;
}

void LogitStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write(out);
}

LogitStore LogitStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read(in);
}

std::size_t refine_logits(LogitStore& store, std::span<const std::size_t> ids, const Tensor<float>& grads) {
  return store.update(ids, grads);
}

// --- training loops ------------------------------------------------------------

namespace {

constexpr std::size_t kEvalChunk = 128;

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void shuffle_in_place(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

void random_flips(Tensor<float>& batch, std::mt19937_64& rng) {
  const std::size_t n = batch.dim(0), ch = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  for (std::size_t i = 0; i < n; ++i) {
    if ((rng() & 1) == 0) continue;
    float* img = batch.ptr() + i * ch * h * w;
    for (std::size_t r = 0; r < ch * h; ++r) std::reverse(img + r * w, img + (r + 1) * w);
  }
}

std::size_t count_correct(const Tensor<float>& logits, std::span<const int> labels) {
  const std::size_t k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = logits.ptr() + i * k;
    correct += static_cast<int>(std::max_element(row, row + k) - row) == labels[i];
  }
  return correct;
}

std::vector<std::size_t> slice(const std::vector<std::size_t>& v, std::size_t start, std::size_t len) {
  return {v.begin() + static_cast<long>(start), v.begin() + static_cast<long>(start + len)};
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

struct Accum {
  double loss = 0, kl = 0, ce = 0;
  std::size_t correct = 0, seen = 0, batches = 0;
  void add(double l, double k, double c) {
    loss += l;
    kl += k;
    ce += c;
    ++batches;
  }
  EpochMetrics finish(std::string phase, std::size_t epoch, double lr) const {
    EpochMetrics m;
    m.phase = std::move(phase);
    m.epoch = epoch;
    m.lr = lr;
    const double b = static_cast<double>(std::max<std::size_t>(batches, 1));
    m.loss = loss / b;
    m.kl = kl / b;
    m.ce = ce / b;
    m.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    return m;
  }
};

void emit(EpochMetrics m, NetworkGraph& net, const Dataset* eval, const ChannelStats& stats,
          std::vector<EpochMetrics>& log, const MetricsSink& sink) {
  if (eval && eval->size()) m.eval_accuracy = accuracy(net, *eval, stats);
  logger()->info("{} epoch {}: loss {:.4f} train acc {:.4f}{}", m.phase, m.epoch, m.loss, m.train_accuracy,
                 m.eval_accuracy ? fmt::format(" eval acc {:.4f}", *m.eval_accuracy) : std::string());
  if (sink) sink(m);
  log.push_back(std::move(m));
}

}  // namespace

double accuracy(NetworkGraph& net, const Dataset& ds, const ChannelStats& stats) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  const auto all = iota_n(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    const auto ids = slice(all, start, std::min(kEvalChunk, ds.size() - start));
    const Tensor<float> logits = predict_logits(net, gather_batch(ds, ids, stats), kEvalChunk);
    correct += count_correct(logits, gather_labels(ds, ids));
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

Tensor<float> teacher_logits(NetworkGraph& teacher, const Dataset& ds, const ChannelStats& stats) {
  Tensor<float> out({ds.size(), teacher.class_count});
  const auto all = iota_n(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    const auto ids = slice(all, start, std::min(kEvalChunk, ds.size() - start));
    const Tensor<float> l = predict_logits(teacher, gather_batch(ds, ids, stats), kEvalChunk);
    std::copy(l.data().begin(), l.data().end(), out.ptr() + start * teacher.class_count);
  }
  return out;
}

std::vector<EpochMetrics> train_supervised(NetworkGraph& net, const Dataset& train, const ChannelStats& stats,
                                           const TrainConfig& cfg, const Dataset* eval, const MetricsSink& sink) {
  train.validate();
  if (train.size() == 0) throw InvalidArgument("train: dataset is empty");
  if (cfg.batch_size == 0) throw InvalidArgument("train: batch size must be positive");
  if (train.class_count != net.class_count) throw InvalidArgument("train: dataset and network class counts differ");
  const std::size_t spe = steps_per_epoch(train.size(), cfg.batch_size);
  const WarmupCosine sched(cfg.lr, cfg.epochs * spe, std::min(cfg.warmup_epochs, cfg.epochs) * spe);
  std::mt19937_64 rng(cfg.seed);
  auto params = net.parameters();
  std::vector<EpochMetrics> log;
  std::vector<std::size_t> order = iota_n(train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    std::vector<std::size_t> partner = order;
    shuffle_in_place(partner, rng);
    Accum acc;
    double lr = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const auto ids = slice(order, start, len);
      Tensor<float> x = gather_batch(train, ids, stats);
      if (cfg.flip) random_flips(x, rng);
      const auto labels = gather_labels(train, ids);
      Tensor<float> y = one_hot(labels, train.class_count);
      if (cfg.mixup_alpha > 0) {
        const auto pid = slice(partner, start, len);
        Tensor<float> xb = gather_batch(train, pid, stats);
        if (cfg.flip) random_flips(xb, rng);
        MixupBatch mb = mixup(x, y, xb, one_hot(gather_labels(train, pid), train.class_count), cfg.mixup_alpha, rng);
        x = std::move(mb.x);
        y = std::move(mb.y);
      }
      Tape<float> tape;
      Var<float> logits = forward(tape, net, tape.constant(x), {Mode::kTraining, true});
      Var<float> loss = soft_cross_entropy(tape, logits, y);
      acc.correct += count_correct(logits.value(), labels);
      acc.seen += len;
      acc.add(loss.value().item(), 0, loss.value().item());
      tape.backward(loss);
      lr = sched.at(step);
      sgd_step<float>(params, lr, cfg.momentum, cfg.weight_decay);
    }
    emit(acc.finish("train", epoch, lr), net, eval, stats, log, sink);
  }
  return log;
}

void FinetuneConfig::validate() const {
  std::vector<std::string> problems;
  if (batch_size == 0) problems.push_back("batch_size must be positive");
  if (!(step1_lr >= 0)) problems.push_back("step1_lr must be >= 0");
  if (!(step2_lr >= 0)) problems.push_back("step2_lr must be >= 0");
  if (!(eta >= 0)) problems.push_back("eta must be >= 0");
  if (use_mixup && !(mixup_alpha > 0)) problems.push_back("mixup_alpha must be positive when mixup is on");
  if (step1.step != DistillStep::kStep1) problems.push_back("step1 config must be a step-1 config");
  if (step2.step != DistillStep::kStep2) problems.push_back("step2 config must be a step-2 config");
  try {
    step1.validate();
    step2.validate();
  } catch (const InvalidArgument& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) {
    std::string msg = "finetune config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw InvalidArgument(msg);
  }
}

FinetuneResult finetune(NetworkGraph& student, NetworkGraph& teacher, const Dataset& train, const ChannelStats& stats,
                        const FinetuneConfig& cfg, const Dataset* eval, const MetricsSink& sink,
                        const ExpandedDataset* expanded) {
  cfg.validate();
  train.validate();
  if (train.size() == 0) throw InvalidArgument("finetune: dataset is empty");
  if (student.class_count != teacher.class_count) {
    throw InvalidArgument("finetune: student has " + std::to_string(student.class_count) + " classes, teacher " +
                          std::to_string(teacher.class_count));
  }
  if (train.class_count != student.class_count) throw InvalidArgument("finetune: dataset and network class counts differ");
  FinetuneResult result;
  auto params = student.parameters();
  std::mt19937_64 rng(derive_seed(cfg.seed, 1));

  // Step 1 on the original records.
  const std::size_t spe1 = steps_per_epoch(train.size(), cfg.batch_size);
  const WarmupCosine sched1(cfg.step1_lr, cfg.step1_epochs * spe1, std::min(cfg.warmup_epochs, cfg.step1_epochs) * spe1);
  std::vector<std::size_t> order = iota_n(train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.step1_epochs; ++epoch) {
    shuffle_in_place(order, rng);
    std::vector<std::size_t> partner = order;
    shuffle_in_place(partner, rng);
    Accum acc;
    double lr = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const auto ids = slice(order, start, len);
      const auto labels = gather_labels(train, ids);
      Tensor<float> x = gather_batch(train, ids, stats);
      Tensor<float> y = one_hot(labels, train.class_count);
      if (cfg.use_mixup) {
        const auto pid = slice(partner, start, len);
        MixupBatch mb = mixup(x, y, gather_batch(train, pid, stats), one_hot(gather_labels(train, pid), train.class_count),
                              cfg.mixup_alpha, rng);
        x = std::move(mb.x);
        y = std::move(mb.y);
      }
      Tape<float> tape;
      Var<float> v = forward(tape, student, tape.constant(x), {Mode::kTraining, true});
      acc.correct += count_correct(v.value(), labels);
      acc.seen += len;
      Var<float> loss = v;
      if (cfg.use_kd) {
        const Tensor<float> u = predict_logits(teacher, x, kEvalChunk);
        LossParts<float> parts = step1_loss(tape, v, u, y, cfg.step1);
        loss = parts.total;
        acc.add(loss.value().item(), parts.kl, parts.ce);
      } else {
        loss = soft_cross_entropy(tape, v, y);
        acc.add(loss.value().item(), 0, loss.value().item());
      }
      tape.backward(loss);
      lr = sched1.at(step);
      sgd_step<float>(params, lr, cfg.momentum, cfg.weight_decay);
    }
    emit(acc.finish("step1", epoch, lr), student, eval, stats, result.metrics, sink);
  }

  if (cfg.run_step2 && cfg.step2_epochs > 0) {
    ExpandedDataset local;
    const Dataset* data = &train;
    if (cfg.expand) {
      if (!expanded) {
        local = expand_dataset(train, derive_seed(cfg.seed, 2));
        expanded = &local;
      }
      data = &expanded->data;
    }
    // Seeded once from the teacher before any student update in this step.
    LogitStore store(teacher_logits(teacher, *data, stats), cfg.refine ? cfg.eta : 0.0);
    const std::size_t spe2 = steps_per_epoch(data->size(), cfg.batch_size);
    const WarmupCosine sched2(cfg.step2_lr, cfg.step2_epochs * spe2, 0);
    std::vector<std::size_t> order2 = iota_n(data->size());
    step = 0;
    for (std::size_t epoch = 0; epoch < cfg.step2_epochs; ++epoch) {
      shuffle_in_place(order2, rng);
      Accum acc;
      double lr = 0;
      std::size_t skipped = 0;
      for (std::size_t start = 0; start < order2.size(); start += cfg.batch_size, ++step) {
        const std::size_t len = std::min(cfg.batch_size, order2.size() - start);
        const auto ids = slice(order2, start, len);
        const auto labels = gather_labels(*data, ids);
        Tensor<float> x = gather_batch(*data, ids, stats);
        if (cfg.step2_flip) random_flips(x, rng);
        Parameter<float> u(store.gather(ids));
        Tape<float> tape;
        Var<float> v = forward(tape, student, tape.constant(x), {Mode::kTraining, true});
        Var<float> uv = tape.watch(u);
        LossParts<float> parts = step2_loss(tape, v, uv, labels, cfg.step2);
        acc.correct += count_correct(v.value(), labels);
        acc.seen += len;
        acc.add(parts.total.value().item(), parts.kl, parts.ce);
        tape.backward(parts.total);
        lr = sched2.at(step);
        sgd_step<float>(params, lr, cfg.momentum, cfg.weight_decay);
        if (cfg.refine) skipped += refine_logits(store, ids, u.grad);
      }
      store.set_epoch(epoch + 1);
      if (!cfg.store_path.empty()) store.save(cfg.store_path);
      EpochMetrics m = acc.finish("step2", epoch, lr);
      m.skipped_refinements = skipped;
      emit(std::move(m), student, eval, stats, result.metrics, sink);
    }
  }
  if (eval && eval->size()) {
    result.final_accuracy = result.metrics.empty() ? accuracy(student, *eval, stats) : *result.metrics.back().eval_accuracy;
  }
  return result;
}

}  // namespace resprune
