#include "ipg/harness/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ipg/errors.hpp"
#include "ipg/rng.hpp"

namespace ipg {

namespace fs = std::filesystem;

namespace {

std::vector<SynthScene> load_split(const DatasetSplit& split, int image_size) {
  std::vector<SynthScene> scenes;
  scenes.reserve(split.size);
  for (int i = 0; i < split.size; ++i) scenes.push_back(generate_scene(split.seed(i), image_size));
  return scenes;
}

std::string format_row(int epoch, long iter, double lr, double loss_cls, double loss_box,
                       const ApReport& ap) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%ld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", epoch, iter,
                lr, loss_cls, loss_box, ap.ap, ap.ap_small, ap.ap_medium, ap.ap_large);
  return buf;
}

// Rows of an existing log with epoch <= `epoch`, header excluded.
std::vector<std::string> kept_rows(const std::string& path, int epoch) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("resume: metrics log " + path + " not found");
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw PreconditionError("resume: " + path + " has an unexpected header");
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= epoch) rows.push_back(line);
  }
  if (static_cast<int>(rows.size()) != epoch) {
    throw PreconditionError("resume: " + path + " lacks rows for the first " +
                            std::to_string(epoch) + " epochs");
  }
  return rows;
}

std::vector<std::uint8_t> encode_seed(std::uint64_t seed) {
  std::vector<std::uint8_t> bytes(8);
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  return bytes;
}

std::uint64_t decode_seed(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != 8) throw PreconditionError("checkpoint rng state has unexpected length");
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return seed;
}

}  // namespace

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.ipgn", epoch);
  return buf;
}

Batch make_batch(const std::vector<SynthScene>& scenes, int multiple) {
  Batch batch;
  batch.images = pad_to_multiple(stack_images(scenes), multiple);
  for (const SynthScene& s : scenes) batch.truth.push_back(s.boxes);
  return batch;
}

DetectionLoss batch_loss(IpgNet& net, const Batch& batch) {
  IpgNet::Output out = net.forward(batch.images, Mode::Train);
  const std::vector<Anchor> anchors = net.anchors(out);
  std::vector<AnchorTargets> targets;
  for (const auto& gts : batch.truth) targets.push_back(assign_targets(anchors, gts));
  return detection_loss(out.head, targets);
}

double Sgd::step(ParamStore& store, double lr) {
  double sq = 0.0;
  for (const auto& [name, p] : store.all()) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double factor = clip_norm_ > 0 && norm > clip_norm_ ? clip_norm_ / norm : 1.0;
  for (const auto& [name, p] : store.all()) {
    if (!p.trainable) continue;
    Tensor param = p.tensor;
    auto it = buffers_.find(name);
    if (it == buffers_.end()) it = buffers_.emplace(name, Tensor(param.shape(), 0.0)).first;
    auto buf = it->second.mutable_values();
    auto value = param.mutable_values();
    const bool has_grad = param.has_grad();
    const auto grad = has_grad ? param.grad() : std::span<const double>{};
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = (has_grad ? factor * grad[i] : 0.0) + weight_decay_ * value[i];
      buf[i] = momentum_ * buf[i] + g;
      value[i] -= lr * buf[i];
    }
  }
  return norm;
}

Evaluation evaluate_split(IpgNet& net, const std::vector<SynthScene>& scenes, DecodeParams params,
                          int batch_size) {
  Evaluation eval;
  const int multiple = net.config().required_multiple();
  for (std::size_t start = 0; start < scenes.size(); start += batch_size) {
    const std::size_t end = std::min(scenes.size(), start + batch_size);
    std::vector<SynthScene> chunk(scenes.begin() + start, scenes.begin() + end);
    Batch batch = make_batch(chunk, multiple);
    IpgNet::Output out = net.forward(batch.images, Mode::Eval);
    const std::vector<Anchor> anchors = net.anchors(out);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const Shape& s = chunk[b].image.shape();
      eval.detections.push_back(
          decode_and_nms(out.head, static_cast<int>(b), anchors, params, s.h, s.w));
      eval.truth.push_back(chunk[b].boxes);
    }
  }
  eval.report = evaluate_ap(eval.detections, eval.truth, net.config().n_classes);
  return eval;
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  if (options.out_dir.empty()) throw ConfigError("train: an output directory is required");
  fs::create_directories(options.out_dir);
  const TrainSchedule& sched = config.schedule;
  const std::uint64_t digest = config_digest(config.model);

  IpgNet net(config.model, derive_seed(config.seed, "init"));
  Sgd sgd(sched.momentum, sched.weight_decay, sched.grad_clip_norm);
  int first_epoch = 1;
  long iter = 0;
  TrainResult result;
  result.metrics_path = (fs::path(options.out_dir) / "metrics.csv").string();
  std::vector<std::string> rows;

  if (!options.resume.empty()) {
    Checkpoint ckpt = load_checkpoint(options.resume);
    restore(ckpt, net.params(), digest);
    if (decode_seed(ckpt.rng_state) != config.seed) {
      throw ConfigError("resume: checkpoint was trained with a different seed");
    }
    sgd.buffers() = ckpt.momentum;
    first_epoch = static_cast<int>(ckpt.epoch) + 1;
    iter = static_cast<long>(ckpt.iteration);
    rows = kept_rows(result.metrics_path, static_cast<int>(ckpt.epoch));
  }
  {
    std::ofstream csv(result.metrics_path, std::ios::trunc);
    csv << kMetricsHeader << '\n';
    for (const auto& r : rows) csv << r << '\n';
  }

  const DatasetSplit train_split = generate_split("train", config.data.train_size, config.data.train_seed);
  const DatasetSplit val_split = generate_split("val", config.data.val_size, config.data.val_seed);
  require_disjoint({train_split, val_split});
  const std::vector<SynthScene> train_scenes = load_split(train_split, config.data.image_size);
  const std::vector<SynthScene> val_scenes = load_split(val_split, config.data.image_size);

  const int multiple = config.model.required_multiple();
  const int per_epoch = std::max(1, config.data.train_size / sched.batch_size);
  const int last_epoch = options.stop_after_epoch > 0
                             ? std::min(options.stop_after_epoch, sched.total_epochs)
                             : sched.total_epochs;

  for (int epoch = first_epoch; epoch <= last_epoch; ++epoch) {
    std::vector<int> order(train_scenes.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sum_cls = 0.0, sum_box = 0.0, lr = 0.0;
    for (int b = 0; b < per_epoch; ++b) {
      std::vector<SynthScene> chunk;
      for (int k = 0; k < sched.batch_size && b * sched.batch_size + k < static_cast<int>(order.size()); ++k) {
        chunk.push_back(train_scenes[order[b * sched.batch_size + k]]);
      }
      Batch batch = make_batch(chunk, multiple);
      net.params().zero_grad();
      DetectionLoss loss = batch_loss(net, batch);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss " + std::to_string(total) + " at iteration " +
                           std::to_string(iter) + " (epoch " + std::to_string(epoch) + ")");
      }
      backward(loss.total);
      lr = lr_at(sched, epoch, iter);
      sgd.step(net.params(), lr);
      if (options.log && options.log_every > 0 && iter % options.log_every == 0) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "iter %ld lr %.6g loss %.5f (cls %.5f box %.5f)", iter, lr,
                      total, loss.cls, loss.box);
        options.log(msg);
      }
      sum_cls += loss.cls;
      sum_box += loss.box;
      ++iter;
    }

    Evaluation eval = evaluate_split(net, val_scenes, config.eval, sched.batch_size);
    result.val = eval.report;
    const std::string row =
        format_row(epoch, iter, lr, sum_cls / per_epoch, sum_box / per_epoch, eval.report);
    {
      std::ofstream csv(result.metrics_path, std::ios::app);
      csv << row << '\n';
    }
    Checkpoint ckpt;
    ckpt.parameters = snapshot(net.params());
    ckpt.momentum = sgd.buffers();
    ckpt.epoch = static_cast<std::uint32_t>(epoch);
    ckpt.iteration = static_cast<std::uint64_t>(iter);
    ckpt.rng_state = encode_seed(config.seed);
    ckpt.config_digest = digest;
    result.last_checkpoint = (fs::path(options.out_dir) / checkpoint_name(epoch)).string();
    save_checkpoint(ckpt, result.last_checkpoint);
    if (options.log) options.log("epoch " + std::to_string(epoch) + ": " + row);
  }
  return result;
}

std::vector<double> overfit_single_batch(const NetworkConfig& model, std::uint64_t seed,
                                         const OverfitOptions& options) {
  IpgNet net(model, derive_seed(seed, "init"));
  std::vector<SynthScene> scenes;
  for (int i = 0; i < options.batch_size; ++i) {
    scenes.push_back(generate_scene(options.data_seed + static_cast<std::uint64_t>(i), options.image_size));
  }
  const Batch batch = make_batch(scenes, model.required_multiple());
  Sgd sgd(0.9, 0.0, options.clip_norm);
  std::vector<double> losses;
  for (int it = 0; it < options.iterations; ++it) {
    net.params().zero_grad();
    DetectionLoss loss = batch_loss(net, batch);
    const double total = loss.total.item();
    if (!std::isfinite(total)) {
      throw NumericError("non-finite loss at overfit iteration " + std::to_string(it));
    }
    losses.push_back(total);
    backward(loss.total);
    sgd.step(net.params(), options.lr);
  }
  return losses;
}

}  // namespace ipg
