// SPDX-License-Identifier: Apache-2.0
#include "vspp/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "vspp/checkpoint.hpp"
#include "vspp/distill.hpp"
#include "vspp/error.hpp"
#include "vspp/evalharness.hpp"
#include "vspp/pipeline.hpp"
#include "vspp/plot.hpp"
#include "vspp/pretext.hpp"
#include "vspp/sampling.hpp"

namespace vspp::commands {

namespace fs = std::filesystem;

config::RunConfig resolve_config(const std::string& config_path, const std::string& profile,
                                 std::optional<std::uint64_t> seed) {
  config::RunConfig cfg = config_path.empty() ? config::defaults(config::parse_profile(profile.empty() ? "desk" : profile))
                                              : config::load(config_path, profile);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

data::Dataset load_dataset(const config::RunConfig& cfg) {
  std::string root = cfg.data.root;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) root = env;
  if (root.empty()) return data::generate_synth_dataset(cfg.synth_spec());
  fs::path manifest = cfg.data.manifest.empty() ? fs::path("manifest.txt") : fs::path(cfg.data.manifest);
  if (manifest.is_relative()) manifest = fs::path(root) / manifest;
  return data::load_manifest_dataset(manifest, root);
}

std::vector<const data::VideoSource*> split_videos(const data::Dataset& dataset, data::Split split, double fraction) {
  const auto all = dataset.split(split);
  if (fraction >= 1.0) return all;
  std::map<int, int> per_class, kept;
  for (const auto* v : all) ++per_class[v->label().value_or(-1)];
  std::vector<const data::VideoSource*> out;
  for (const auto* v : all) {
    const int c = v->label().value_or(-1);
    const int quota = static_cast<int>(std::ceil(fraction * per_class[c] - 1e-9));
    if (kept[c] < quota) {
      ++kept[c];
      out.push_back(v);
    }
  }
  return out;
}

namespace {

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Usage, "checkpoint '" + path + "' does not exist or is unreadable");
  std::stringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

void log_line(const RunOptions& opts, const std::string& line) {
  if (opts.log) *opts.log << line << std::endl;
}

fs::path epoch_checkpoint(const fs::path& dir, int epoch) { return dir / fmt::format("epoch_{:03d}.ckpt", epoch); }

std::optional<std::pair<fs::path, int>> latest_checkpoint(const fs::path& dir) {
  std::optional<std::pair<fs::path, int>> best;
  if (!fs::exists(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    int epoch = 0;
    if (name.size() == 15 && name.starts_with("epoch_") && name.ends_with(".ckpt") &&
        std::sscanf(name.c_str(), "epoch_%3d.ckpt", &epoch) == 1 && (!best || epoch > best->second))
      best = std::make_pair(e.path(), epoch);
  }
  return best;
}

nn::ParamList prefixed(nn::ParamList list, const std::string& prefix) {
  for (auto& p : list) p.name = prefix + p.name;
  return list;
}

nn::BufferList prefixed(nn::BufferList list, const std::string& prefix) {
  for (auto& b : list) b.name = prefix + b.name;
  return list;
}

template <class T>
void append(checkpoint::TensorTable& dst, T&& src) {
  for (auto& e : src) dst.push_back(std::move(e));
}

checkpoint::Checkpoint base_checkpoint(const std::string& stage, const config::RunConfig& cfg, int epoch,
                                       std::int64_t step) {
  checkpoint::Checkpoint c;
  c.stage = stage;
  c.config_yaml = config::to_yaml(cfg);
  c.config_hash = config::config_hash(cfg);
  c.encoder = cfg.encoder();
  c.epoch = epoch;
  c.step = step;
  // Every stream is derived from (seed, stream, epoch, ...), so this is the
  // complete generator state at an epoch boundary.
  c.rng_state = fmt::format("derive_seed base={} next_epoch={}", cfg.seed, epoch + 1);
  return c;
}

checkpoint::Checkpoint load_for_resume(const fs::path& path, const std::string& stage, const config::RunConfig& cfg) {
  auto c = checkpoint::load(path);
  if (c.stage != stage) throw Error(Errc::ConfigMismatch, "cannot resume " + stage + " from a " + c.stage + " checkpoint");
  if (c.config_hash != config::config_hash(cfg))
    throw Error(Errc::ConfigMismatch, "checkpoint " + path.string() + " was written with a different config");
  return c;
}

void require_encoder(const checkpoint::Checkpoint& c, const config::RunConfig& cfg) {
  if (!(c.encoder == cfg.encoder()))
    throw Error(Errc::ConfigMismatch, fmt::format("checkpoint encoder ({}, D={}) differs from the configured one ({}, D={})",
                                                  models::to_string(c.encoder.family), c.encoder.embedding_dim(),
                                                  models::to_string(cfg.encoder().family),
                                                  cfg.encoder().embedding_dim()));
}

metrics::MetricsTable new_table(const std::string& stage, const config::RunConfig& cfg,
                                std::vector<std::string> columns) {
  metrics::MetricsTable t;
  t.stage = stage;
  t.config_hash = config::config_hash(cfg);
  t.config_yaml = config::to_yaml(cfg);
  t.columns = std::move(columns);
  return t;
}

RunResult start_run(const std::string& stage, const config::RunConfig& cfg, const RunOptions& opts,
                    const std::string& input_checkpoint) {
  RunResult r;
  r.run_dir = opts.out_dir / run_id(stage, cfg, input_checkpoint);
  fs::create_directories(r.run_dir);
  r.metrics = r.run_dir / "metrics.csv";
  std::ofstream(r.run_dir / "config.yaml") << config::to_yaml(cfg);
  return r;
}

}  // namespace

std::string run_id(const std::string& stage, const config::RunConfig& cfg, const std::string& input_checkpoint) {
  std::uint64_t h = config::config_hash(cfg);
  if (!input_checkpoint.empty()) h = fnv1a(config::hash_hex(file_digest(input_checkpoint)), h);
  return fmt::format("{}-s{}-{}", stage, cfg.seed, config::hash_hex(h).substr(0, 8));
}

// ------------------------------------------------------------------ stage 1

RunResult pretrain_aux(const config::RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  RunResult res = start_run("aux", cfg, opts, "");
  const auto dataset = load_dataset(cfg);
  const auto train = split_videos(dataset, data::Split::Train);
  const auto refs = pipeline::make_refs(train);

  distill::DistillPair pair{models::init_from_scratch(cfg.encoder(), cfg.heads(), cfg.seed), cfg.aux.momentum,
                            cfg.aux.teacher_temp, cfg.aux.student_temp};
  distill::MemoryBank bank(cfg.aux.bank_size, cfg.model.projection_dim);
  nn::Sgd sgd(cfg.sgd());
  const auto student_params = nn::parameters_of(*pair.nets.student);
  const auto teacher_params = prefixed(nn::parameters_of(*pair.nets.teacher), "teacher.");
  const auto student_buffers = nn::buffers_of(*pair.nets.student);
  const auto teacher_buffers = prefixed(nn::buffers_of(*pair.nets.teacher), "teacher.");

  res.table = new_table("aux", cfg, {"step", "epoch", "kl_loss", "bank_fill", "lr", "max_sum_error"});
  int first_epoch = 1;
  std::int64_t step = 0;
  if (opts.resume) {
    if (auto latest = latest_checkpoint(res.run_dir)) {
      const auto c = load_for_resume(latest->first, "aux", cfg);
      checkpoint::restore(c.parameters, student_params);
      checkpoint::restore(c.parameters, teacher_params);
      checkpoint::restore(c.buffers, student_buffers);
      checkpoint::restore(c.buffers, teacher_buffers);
      checkpoint::restore(c.optimizer, sgd);
      if (!c.bank) throw Error(Errc::CorruptCheckpoint, "stage-1 checkpoint has no memory bank");
      checkpoint::restore(*c.bank, bank);
      first_epoch = static_cast<int>(c.epoch) + 1;
      step = c.step;
      res.table = metrics::load(res.metrics);
      res.table.truncate_after("epoch", static_cast<double>(c.epoch));
      log_line(opts, fmt::format("resuming {} at epoch {}", res.run_dir.string(), first_epoch));
    }
  }

  const auto schedule = cfg.schedule(cfg.aux.lr);
  const auto settings = cfg.view_settings();
  for (int epoch = first_epoch; epoch <= cfg.aux.epochs; ++epoch) {
    const double lr = schedule.lr_at(epoch);
    double loss_sum = 0;
    int steps = 0;
    for (const auto& batch : pipeline::epoch_batches(refs, cfg.optim.batch_size, cfg.seed, epoch)) {
      const auto r = distill::aux_train_step(pair, bank, batch, settings, static_cast<std::uint64_t>(epoch), sgd, lr);
      ++step;
      res.table.add_row({static_cast<double>(step), static_cast<double>(epoch), r.loss,
                         static_cast<double>(r.bank_fill), lr, r.max_sum_error});
      loss_sum += r.loss;
      ++steps;
    }
    auto c = base_checkpoint("aux", cfg, epoch, step);
    c.parameters = checkpoint::capture(student_params);
    append(c.parameters, checkpoint::capture(teacher_params));
    c.buffers = checkpoint::capture(student_buffers);
    append(c.buffers, checkpoint::capture(teacher_buffers));
    c.optimizer = checkpoint::capture(sgd);
    c.bank = checkpoint::capture(bank);
    res.checkpoint = epoch_checkpoint(res.run_dir, epoch);
    checkpoint::save(res.checkpoint, c);
    res.checkpoints.push_back(res.checkpoint);
    metrics::save(res.metrics, res.table);
    log_line(opts, fmt::format("aux epoch {:>3} lr {:.2e} kl {:.5f} bank {}", epoch, lr,
                               steps ? loss_sum / steps : 0.0, bank.fill()));
    if (opts.stop_after_epoch && epoch >= *opts.stop_after_epoch) break;
  }
  if (res.checkpoint.empty())
    if (auto latest = latest_checkpoint(res.run_dir)) res.checkpoint = latest->first;
  return res;
}

// ------------------------------------------------------------------ stage 2

RunResult pretrain_vspp(const config::RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  RunResult res = start_run("vspp", cfg, opts, opts.checkpoint);
  const auto dataset = load_dataset(cfg);
  const auto train_refs = pipeline::make_refs(split_videos(dataset, data::Split::Train));
  const auto val_refs = pipeline::make_refs(split_videos(dataset, data::Split::Val));
  const int speeds = cfg.sampler.max_speed;
  const int segments = cfg.sampler.segments;
  const bool has_segment = segments > 1;

  std::optional<models::VsppNet> net;
  if (!opts.checkpoint.empty()) {
    file_digest(opts.checkpoint);
    const auto c = checkpoint::load(opts.checkpoint);
    require_encoder(c, cfg);
    net.emplace(pretext::load_stage1_weights(c, cfg.encoder(), speeds, segments, cfg.seed));
    log_line(opts, "encoder initialized from " + opts.checkpoint);
  } else {
    net.emplace(cfg.encoder(), speeds, segments);
    Rng init(derive_seed(cfg.seed, {stream::kInit}));
    net->encoder().reset_parameters(init);
    Rng heads(derive_seed(cfg.seed, {stream::kHeads}));
    net->reset_heads(heads);
  }
  nn::Sgd sgd(cfg.sgd());

  std::vector<std::string> cols{"epoch", "lr", "total", "speed_loss"};
  if (has_segment) cols.push_back("segment_loss");
  cols.push_back("speed_acc");
  if (has_segment) cols.push_back("segment_acc");
  cols.push_back("val_speed_loss");
  if (has_segment) cols.push_back("val_segment_loss");
  cols.push_back("val_speed_acc");
  if (has_segment) cols.push_back("val_segment_acc");
  res.table = new_table("vspp", cfg, cols);

  int first_epoch = 1;
  std::int64_t step = 0;
  if (opts.resume) {
    if (auto latest = latest_checkpoint(res.run_dir)) {
      const auto c = load_for_resume(latest->first, "vspp", cfg);
      checkpoint::restore(c.parameters, net->parameters());
      checkpoint::restore(c.buffers, net->buffers());
      checkpoint::restore(c.optimizer, sgd);
      first_epoch = static_cast<int>(c.epoch) + 1;
      step = c.step;
      res.table = metrics::load(res.metrics);
      res.table.truncate_after("epoch", static_cast<double>(c.epoch));
      log_line(opts, fmt::format("resuming {} at epoch {}", res.run_dir.string(), first_epoch));
    }
  }

  const auto schedule = cfg.schedule(cfg.vspp.lr);
  auto settings = cfg.view_settings();
  settings.augment.enabled = settings.augment.enabled && cfg.vspp.augment;
  const auto weights = cfg.loss_weights();
  for (int epoch = first_epoch; epoch <= cfg.vspp.epochs; ++epoch) {
    const double lr = schedule.lr_at(epoch);
    double total = 0, speed = 0, segment = 0;
    int count = 0, speed_hits = 0, segment_hits = 0;
    for (int pass = 0; pass < cfg.vspp.passes_per_epoch; ++pass) {
      const auto p = static_cast<std::uint64_t>(pass);
      for (const auto& batch : pipeline::epoch_batches(train_refs, cfg.optim.batch_size, cfg.seed, epoch, p)) {
        const auto r = pretext::vspp_train_step(*net, batch, settings, static_cast<std::uint64_t>(epoch), weights, sgd, lr, p);
        ++step;
        total += r.loss.total * r.count;
        speed += r.loss.speed * r.count;
        segment += r.loss.segment * r.count;
        speed_hits += r.speed_correct;
        segment_hits += r.segment_correct;
        count += r.count;
      }
    }
    const double n = std::max(count, 1);
    const auto val = pretext::evaluate_vspp(*net, val_refs, settings, cfg.vspp.eval_plans, cfg.optim.batch_size);
    std::vector<double> row{static_cast<double>(epoch), lr, total / n, speed / n};
    if (has_segment) row.push_back(segment / n);
    row.push_back(speed_hits / n);
    if (has_segment) row.push_back(segment_hits / n);
    row.push_back(val.speed_loss);
    if (has_segment) row.push_back(val.segment_loss);
    row.push_back(val.speed);
    if (has_segment) row.push_back(val.segment);
    res.table.add_row(std::move(row));

    auto c = base_checkpoint("vspp", cfg, epoch, step);
    c.parameters = checkpoint::capture(net->parameters());
    c.buffers = checkpoint::capture(net->buffers());
    c.optimizer = checkpoint::capture(sgd);
    res.checkpoint = epoch_checkpoint(res.run_dir, epoch);
    checkpoint::save(res.checkpoint, c);
    res.checkpoints.push_back(res.checkpoint);
    metrics::save(res.metrics, res.table);
    log_line(opts, fmt::format("vspp epoch {:>3} lr {:.2e} loss {:.4f} val speed {:.3f} segment {:.3f}", epoch, lr,
                               total / n, val.speed, val.segment));
    if (opts.stop_after_epoch && epoch >= *opts.stop_after_epoch) break;
  }
  if (res.checkpoint.empty())
    if (auto latest = latest_checkpoint(res.run_dir)) res.checkpoint = latest->first;
  return res;
}

// ------------------------------------------------------------------ downstream

namespace {

void write_results(const fs::path& path, const std::string& id, const std::vector<std::pair<std::string, double>>& rows,
                   const std::string& checkpoint, std::uint64_t hash) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "# schema: vspp-results/1\n";
  out << "run_id,split,checkpoint,top1,config_hash\n";
  for (const auto& [split, top1] : rows)
    out << fmt::format("{},{},{},{:.6f},{}\n", id, split, checkpoint.empty() ? "none" : checkpoint, top1,
                       config::hash_hex(hash));
}

}  // namespace

RunResult finetune(const config::RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  RunResult res = start_run("finetune", cfg, opts, opts.checkpoint);
  const auto dataset = load_dataset(cfg);
  const auto train = split_videos(dataset, data::Split::Train, cfg.data.train_fraction);
  const auto val = split_videos(dataset, data::Split::Val);
  const auto refs = pipeline::make_refs(train);

  auto net = eval::make_classifier(cfg.encoder(), dataset.num_classes, cfg.seed);
  if (!opts.checkpoint.empty()) {
    file_digest(opts.checkpoint);
    const auto c = checkpoint::load(opts.checkpoint);
    require_encoder(c, cfg);
    checkpoint::restore(c.parameters, nn::parameters_of(net), "encoder.");
    checkpoint::restore(c.buffers, nn::buffers_of(net), "encoder.");
    log_line(opts, "encoder initialized from " + opts.checkpoint);
  }
  nn::Sgd sgd(cfg.sgd());
  res.table = new_table("finetune", cfg, {"epoch", "lr", "loss", "train_acc"});

  int first_epoch = 1;
  if (opts.resume) {
    if (auto latest = latest_checkpoint(res.run_dir)) {
      const auto c = load_for_resume(latest->first, "finetune", cfg);
      checkpoint::restore(c.parameters, nn::parameters_of(net));
      checkpoint::restore(c.buffers, nn::buffers_of(net));
      checkpoint::restore(c.optimizer, sgd);
      first_epoch = static_cast<int>(c.epoch) + 1;
      res.table = metrics::load(res.metrics);
      res.table.truncate_after("epoch", static_cast<double>(c.epoch));
    }
  }

  const auto fc = cfg.finetune_config();
  std::int64_t step = 0;
  const int last = opts.stop_after_epoch ? std::min(*opts.stop_after_epoch, fc.epochs) : fc.epochs;
  for (int epoch = first_epoch; epoch <= last; ++epoch) {
    const auto rec = eval::finetune_epoch(net, refs, fc, epoch, sgd);
    step += static_cast<std::int64_t>(refs.size()) / fc.batch_size;
    res.table.add_row({static_cast<double>(epoch), rec.lr, rec.loss, rec.train_accuracy});
    auto c = base_checkpoint("finetune", cfg, epoch, step);
    c.parameters = checkpoint::capture(nn::parameters_of(net));
    c.buffers = checkpoint::capture(nn::buffers_of(net));
    c.optimizer = checkpoint::capture(sgd);
    res.checkpoint = epoch_checkpoint(res.run_dir, epoch);
    checkpoint::save(res.checkpoint, c);
    res.checkpoints.push_back(res.checkpoint);
    metrics::save(res.metrics, res.table);
    log_line(opts, fmt::format("finetune epoch {:>3} lr {:.2e} loss {:.4f} train acc {:.3f}", epoch, rec.lr, rec.loss,
                               rec.train_accuracy));
  }
  if (res.checkpoint.empty())
    if (auto latest = latest_checkpoint(res.run_dir)) res.checkpoint = latest->first;

  eval::ClassifierScorer scorer(net);
  res.top1 = eval::evaluate_dataset(scorer, val, cfg.eval_protocol()).top1;
  write_results(res.run_dir / "results.csv", res.run_dir.filename().string(), {{"val", res.top1}}, opts.checkpoint,
                config::config_hash(cfg));
  log_line(opts, fmt::format("finetune val top1 {:.4f}", res.top1));
  return res;
}

RunResult evaluate(const config::RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (opts.checkpoint.empty()) throw Error(Errc::Usage, "evaluate needs --checkpoint <finetuned model>");
  file_digest(opts.checkpoint);
  RunResult res = start_run("evaluate", cfg, opts, opts.checkpoint);
  const auto c = checkpoint::load(opts.checkpoint);
  require_encoder(c, cfg);
  const Tensor* w = c.find_parameter("classifier.weight");
  if (!w || w->rank() != 2)
    throw Error(Errc::ConfigMismatch, "checkpoint '" + opts.checkpoint + "' holds no classifier (stage " + c.stage + ")");
  models::ClassifierNet net(cfg.encoder(), static_cast<int>(w->dim(0)));
  checkpoint::restore(c.parameters, nn::parameters_of(net));
  checkpoint::restore(c.buffers, nn::buffers_of(net));

  const auto dataset = load_dataset(cfg);
  eval::ClassifierScorer scorer(net);
  const auto protocol = cfg.eval_protocol();
  const double val = eval::evaluate_dataset(scorer, split_videos(dataset, data::Split::Val), protocol).top1;
  res.top1 = eval::evaluate_dataset(scorer, split_videos(dataset, data::Split::Test), protocol).top1;
  res.metrics = res.run_dir / "results.csv";
  res.checkpoint = opts.checkpoint;
  write_results(res.metrics, res.run_dir.filename().string(), {{"val", val}, {"test", res.top1}}, opts.checkpoint,
                config::config_hash(cfg));
  log_line(opts, fmt::format("evaluate val top1 {:.4f} test top1 {:.4f}", val, res.top1));
  return res;
}

// ------------------------------------------------------------------ tools

std::string inspect_sample(const InspectRequest& q) {
  sampling::SamplerParams p;
  p.frames = q.frames;
  p.clip_len = q.clip_len;
  p.segments = q.segments;
  p.max_speed = q.max_speed;
  return sampling::to_record(sampling::vspp_indices(p, q.speed, q.segment, q.offset));
}

std::vector<fs::path> plot(const std::vector<fs::path>& files, const std::vector<std::string>& labels,
                           const fs::path& out_dir) {
  if (!labels.empty() && labels.size() != files.size())
    throw Error(Errc::Usage, "give one label per metrics file");
  std::vector<vspp::plot::PlotInput> inputs;
  for (std::size_t i = 0; i < files.size(); ++i)
    inputs.push_back({labels.empty() ? files[i].parent_path().filename().string() + "/" + files[i].stem().string()
                                     : labels[i],
                      metrics::load(files[i])});
  return vspp::plot::plot_metrics(inputs, out_dir);
}

}  // namespace vspp::commands
