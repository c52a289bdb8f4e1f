#include "remixlab/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "remixlab/config.hpp"

namespace remixlab::train {

namespace {

using nlohmann::json;

constexpr std::uint64_t kInitStream = 0xc2b2'ae3d'27d4'eb4fULL;
constexpr const char* kSchemaVersion = "1.0";
constexpr const char* kCsvSchemaMajor = "1";

std::size_t idx(int k) { return static_cast<std::size_t>(k); }

std::vector<std::size_t> rows_of(const data::MultimodalDataset& ds, const std::vector<SampleId>& ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (SampleId id : ids) {
    const auto r = ds.find(id);
    if (r < 0) throw PartitionError("batch names unknown sample id " + std::to_string(id));
    rows.push_back(static_cast<std::size_t>(r));
  }
  return rows;
}

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string loss_text(const model::LossBreakdown& l) {
  std::ostringstream os;
  os << "total=" << l.total << " fused=" << l.fused;
  for (std::size_t k = 0; k < l.heads.size(); ++k) {
    os << " head_" << data::modality_name(static_cast<int>(k)) << '=' << l.heads[k];
  }
  return os.str();
}

std::filesystem::path epoch_file(const std::filesystem::path& dir, const char* stem, int epoch,
                                 const char* ext) {
  std::ostringstream os;
  os << stem << std::setw(3) << std::setfill('0') << epoch << ext;
  return dir / os.str();
}

}  // namespace

Variant parse_variant(std::string_view key) {
  if (key == "baseline") return Variant::Baseline;
  if (key == "decouple_only" || key == "decouple") return Variant::DecoupleOnly;
  if (key == "reassemble_only" || key == "reassemble") return Variant::ReassembleOnly;
  if (key == "full_remix" || key == "remix" || key == "full") return Variant::FullRemix;
  throw ValidationError("variant in {baseline,decouple_only,reassemble_only,full_remix}",
                        "unknown variant '" + std::string(key) + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::DecoupleOnly: return "decouple_only";
    case Variant::ReassembleOnly: return "reassemble_only";
    case Variant::FullRemix: return "full_remix";
  }
  return "?";
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* constraint) {
    if (!ok) throw ValidationError(constraint, constraint);
  };
  require(total_epochs >= 0, "total_epochs>=0");
  require(warmup_epochs >= 0 && warmup_epochs <= total_epochs, "0<=warmup_epochs<=total_epochs");
  require(batch_size >= 1, "batch_size>=1");
  require(adam.lr >= 0.0, "lr>=0");
  require(adam.beta1 > 0.0 && adam.beta1 < 1.0, "beta1 in (0,1)");
  require(adam.beta2 > 0.0 && adam.beta2 < 1.0, "beta2 in (0,1)");
  require(adam.eps > 0.0, "adam_eps>0");
  require(hidden >= 1 && feature_dim >= 1, "hidden>=1,feature_dim>=1");
  require(eval_cadence >= 1, "eval_cadence>=1");
  require(decouple_every >= 1, "decouple_every>=1");
  require(checkpoint_every >= 0, "checkpoint_every>=0");
  for (double w : loss_weights) require(w >= 0.0, "loss_weights>=0");
}

double EpochStats::mean_angle(int k) const {
  if (idx(k) >= angle_defined.size() || angle_defined[idx(k)] == 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return angle_sum[idx(k)] / static_cast<double>(angle_defined[idx(k)]);
}

Trainer::Trainer(const TrainConfig& cfg, const data::MultimodalDataset& train_set)
    : cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  if (train_set.empty()) throw ValidationError("non-empty training set", "training set is empty");
  model::ModelShape shape;
  shape.input_dims.clear();
  for (const auto& x : train_set.samples.front().inputs) shape.input_dims.push_back(static_cast<int>(x.size()));
  shape.num_classes = train_set.num_classes();
  shape.hidden = cfg_.hidden;
  shape.feature_dim = cfg_.feature_dim;
  shape.encoder_bias = cfg_.encoder_bias;
  shape.fusion = cfg_.fusion;
  shape.mask_level = cfg_.mask_level;
  shape.loss_weights = cfg_.loss_weights;
  std::mt19937_64 init_rng(cfg_.seed ^ kInitStream);
  model_ = model::make_model(shape, init_rng);
  adam_ = nn::make_adam(cfg_.adam, model::tensors(model_));
}

std::vector<bool> Trainer::active_tensors() const {
  const bool freeze = cfg_.freeze_heads_after_warmup && epoch_ >= cfg_.warmup_epochs;
  std::vector<bool> active;
  for (const auto& t : model::tensor_layout(model_)) {
    active.push_back(!(freeze && t.group == model::ParamGroup::Head));
  }
  return active;
}

EpochResult Trainer::train_plan(const data::MultimodalDataset& train_set,
                                const remix::BatchPlan& plan,
                                const std::vector<std::vector<bool>>& masks,
                                const std::string& phase, bool masking) {
  const int K = model_.modalities();
  EpochResult res;
  auto& st = res.stats;
  st.epoch = epoch_;
  st.phase = phase;
  st.masking = masking;
  st.purity = !plan.batches.empty() &&
              std::all_of(plan.batches.begin(), plan.batches.end(),
                          [](const remix::PlannedBatch& b) { return b.subset >= 0; });
  st.loss_heads.assign(idx(K), 0.0);
  st.angle_sum.assign(idx(K), 0.0);
  st.angle_defined.assign(idx(K), 0);
  st.angle_undefined.assign(idx(K), 0);

  const std::vector<std::vector<bool>> no_masks(train_set.size(), std::vector<bool>(idx(K), false));
  const auto active = active_tensors();

  model::LossOptions ideal_opts;
  ideal_opts.fused = false;
  ideal_opts.weighted_heads = false;
  ideal_opts.head_terms = model::HeadTerms::All;

  for (std::size_t bi = 0; bi < plan.batches.size(); ++bi) {
    const auto rows = rows_of(train_set, plan.batches[bi].ids);
    const model::Batch batch = model::make_batch(train_set, rows, &masks);
    st.last_batch_ids = batch.ids;

    model::LossAndGradient lg;
    try {
      lg = model::loss_and_gradient(model_, batch);
    } catch (const GradientError& e) {
      throw TrainAbort(std::string(e.what()) + " at epoch " + std::to_string(epoch_), epoch_, batch.ids);
    }
    if (!std::isfinite(lg.loss.total)) {
      throw TrainAbort("non-finite loss at epoch " + std::to_string(epoch_) + ": " + loss_text(lg.loss),
                       epoch_, batch.ids);
    }

    if (cfg_.probe_angles) {
      // encoder k only sees head k's term when the fused term is off, so one
      // pass yields every modality's ideal direction
      const model::Batch full = model::make_batch(train_set, rows, &no_masks);
      const auto ideal = model::loss_and_gradient(model_, full, ideal_opts);
      for (int k = 0; k < K; ++k) {
        bool defined = false;
        const double angle = metrics::angle_degrees(model::flatten_encoder(lg.grad, k),
                                                    model::flatten_encoder(ideal.grad, k), 1e-12,
                                                    &defined);
        res.angles.push_back({epoch_, bi, k, angle, defined});
        if (defined) {
          st.angle_sum[idx(k)] += angle;
          ++st.angle_defined[idx(k)];
        } else {
          ++st.angle_undefined[idx(k)];
        }
      }
    }

    nn::adam_step(model::tensors(model_), model::tensors(std::as_const(lg.grad)), adam_, &active);

    const double w = static_cast<double>(batch.size());
    st.loss_total += w * lg.loss.total;
    st.loss_fused += w * lg.loss.fused;
    for (int k = 0; k < K; ++k) st.loss_heads[idx(k)] += w * lg.loss.heads[idx(k)];
    st.samples += batch.size();
    ++st.batches;
  }
  if (st.samples > 0) {
    const double inv = 1.0 / static_cast<double>(st.samples);
    st.loss_total *= inv;
    st.loss_fused *= inv;
    for (auto& h : st.loss_heads) h *= inv;
  }
  ++epoch_;
  return res;
}

remix::Partition Trainer::current_partition(const data::MultimodalDataset& train_set) {
  const int since = epoch_ - cfg_.warmup_epochs;
  if (last_partition_ && since % cfg_.decouple_every != 0) {
    remix::Partition p = *last_partition_;
    p.epoch = epoch_;
    return p;
  }
  last_partition_ = remix::decouple(model_, train_set, cfg_.uni_mode, epoch_);
  return *last_partition_;
}

EpochResult Trainer::warmup_epoch(const data::MultimodalDataset& train_set) {
  if (epoch_ >= cfg_.warmup_epochs && cfg_.variant != Variant::Baseline) {
    throw ValidationError("epoch<warmup_epochs", "warm-up epoch requested after the warm-up stage");
  }
  const auto ids = train_set.ids();
  const auto plan = remix::build_mixed_plan(ids, cfg_.batch_size, rng_());
  const std::vector<std::vector<bool>> no_masks(train_set.size(),
                                                std::vector<bool>(idx(model_.modalities()), false));
  const bool warm = epoch_ < cfg_.warmup_epochs;
  return train_plan(train_set, plan, no_masks, warm ? "warmup" : "baseline", false);
}

EpochResult Trainer::remix_epoch(const data::MultimodalDataset& train_set) {
  if (epoch_ < cfg_.warmup_epochs || cfg_.variant != Variant::FullRemix) {
    throw ValidationError("epoch>=warmup_epochs,variant=full_remix", "remix epoch not allowed here");
  }
  remix::Partition p = current_partition(train_set);
  const auto view = remix::apply_masks(train_set, p);
  const auto plan = remix::build_batch_plan(p, cfg_.batch_size, cfg_.order_policy, rng_());
  EpochResult res = train_plan(train_set, plan, view.masks, "remix", true);
  res.stats.retained = metrics::retained_counts(p);
  res.partition = std::move(p);
  return res;
}

EpochResult Trainer::ablation_epoch(const data::MultimodalDataset& train_set) {
  if (epoch_ < cfg_.warmup_epochs ||
      (cfg_.variant != Variant::DecoupleOnly && cfg_.variant != Variant::ReassembleOnly)) {
    throw ValidationError("epoch>=warmup_epochs,variant in {decouple_only,reassemble_only}",
                          "ablation epoch not allowed here");
  }
  remix::Partition p = current_partition(train_set);
  EpochResult res;
  if (cfg_.variant == Variant::DecoupleOnly) {
    const auto view = remix::apply_masks(train_set, p);
    const auto ids = train_set.ids();
    const auto plan = remix::build_mixed_plan(ids, cfg_.batch_size, rng_());
    res = train_plan(train_set, plan, view.masks, "decouple_only", true);
  } else {
    const auto plan = remix::build_batch_plan(p, cfg_.batch_size, cfg_.order_policy, rng_());
    const auto view = remix::unmasked_view(train_set);
    res = train_plan(train_set, plan, view.masks, "reassemble_only", false);
  }
  res.stats.retained = metrics::retained_counts(p);
  res.partition = std::move(p);
  return res;
}

EpochResult Trainer::run_epoch(const data::MultimodalDataset& train_set) {
  if (epoch_ < cfg_.warmup_epochs || cfg_.variant == Variant::Baseline) {
    return warmup_epoch(train_set);
  }
  if (cfg_.variant == Variant::FullRemix) return remix_epoch(train_set);
  return ablation_epoch(train_set);
}

model::Checkpoint Trainer::checkpoint() const {
  model::Checkpoint c;
  c.model = model_;
  c.adam = adam_;
  std::ostringstream os;
  os << rng_;
  c.rng_state = os.str();
  c.epoch = epoch_;
  return c;
}

void Trainer::restore(const model::Checkpoint& ckpt) {
  model_ = ckpt.model;
  adam_ = ckpt.adam;
  std::istringstream is(ckpt.rng_state);
  is >> rng_;
  epoch_ = ckpt.epoch;
  last_partition_.reset();
}

FinalMetrics evaluate_final(const model::MultimodalModel& m, const data::MultimodalDataset& test) {
  FinalMetrics f;
  f.test_acc = metrics::accuracy(m, test, metrics::kMultimodal);
  for (int k = 0; k < m.modalities(); ++k) {
    f.test_acc_head.push_back(metrics::accuracy(m, test, k, model::UniMode::Head));
    f.test_acc_zeromask.push_back(metrics::accuracy(m, test, k, model::UniMode::ZeroMask));
  }
  f.test_rho = metrics::imbalance_ratio(m, test, model::UniMode::Head).rho;
  return f;
}

const std::vector<std::string>& run_csv_columns() {
  static const std::vector<std::string> cols{
      "schema_version", "epoch",          "phase",           "variant",
      "samples",        "batches",        "masking",         "purity",
      "loss_total",     "loss_fused",     "loss_head_audio", "loss_head_video",
      "train_acc",      "val_acc",        "val_acc_audio",   "val_acc_video",
      "rho",            "retained_audio", "retained_video",  "angle_audio",
      "angle_video",    "angles_defined_audio", "angles_defined_video"};
  return cols;
}

void write_run_csv(const RunRecord& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& cols = run_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& row : r.rows) {
    const auto& s = row.stats;
    auto at = [](const std::vector<double>& v, std::size_t k) {
      return k < v.size() ? v[k] : std::numeric_limits<double>::quiet_NaN();
    };
    auto count = [](const std::vector<std::size_t>& v, std::size_t k) {
      return k < v.size() ? std::to_string(v[k]) : std::string("nan");
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out << kCsvSchemaMajor << ',' << s.epoch << ',' << s.phase << ',' << to_string(r.config.variant)
        << ',' << s.samples << ',' << s.batches << ',' << (s.masking ? 1 : 0) << ','
        << (s.purity ? 1 : 0) << ',' << num(s.loss_total) << ',' << num(s.loss_fused) << ','
        << num(at(s.loss_heads, 0)) << ',' << num(at(s.loss_heads, 1)) << ','
        << num(row.evaluated ? row.train_acc : nan) << ',' << num(row.evaluated ? row.val_acc : nan)
        << ',' << num(row.evaluated ? at(row.val_acc_uni, 0) : nan) << ','
        << num(row.evaluated ? at(row.val_acc_uni, 1) : nan) << ','
        << num(row.evaluated && row.rho.defined ? row.rho.rho : nan) << ','
        << count(s.retained, 0) << ',' << count(s.retained, 1) << ',' << num(s.mean_angle(0)) << ','
        << num(s.mean_angle(1)) << ',' << count(s.angle_defined, 0) << ','
        << count(s.angle_defined, 1) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_metrics_csv(const RunRecord& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "schema_version,epoch,split,mode,metric,value\n";
  for (const auto& m : r.metrics) {
    out << kCsvSchemaMajor << ',' << m.epoch << ',' << m.split << ',' << m.mode << ',' << m.metric
        << ',' << num(m.value) << '\n';
  }
}

void write_angles_csv(const RunRecord& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "schema_version,epoch,batch,modality,angle_deg,defined\n";
  for (const auto& a : r.angles) {
    out << kCsvSchemaMajor << ',' << a.epoch << ',' << a.batch << ','
        << data::modality_name(a.modality) << ',' << num(a.angle_deg) << ',' << (a.defined ? 1 : 0)
        << '\n';
  }
}

void write_run_json(const RunRecord& r, const std::filesystem::path& path, bool complete) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["status"] = complete ? "complete" : (r.aborted ? "aborted" : "running");
  j["train_config"] = config::to_json(r.config);
  j["synth_spec"] = config::to_json(r.spec);
  j["epochs_recorded"] = r.rows.size();
  j["partitions"] = r.partitions.size();
  j["wall_seconds"] = r.wall_seconds;
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  if (r.final_metrics) {
    const auto& f = *r.final_metrics;
    json fm{{"test_acc", f.test_acc}, {"test_rho_head", std::isfinite(f.test_rho) ? json(f.test_rho) : json(nullptr)}};
    for (std::size_t k = 0; k < f.test_acc_head.size(); ++k) {
      const auto name = data::modality_name(static_cast<int>(k));
      fm["test_acc_" + name + "_head"] = f.test_acc_head[k];
      fm["test_acc_" + name + "_zeromask"] = f.test_acc_zeromask[k];
    }
    j["final"] = fm;
  }
  j["run_csv_columns"] = run_csv_columns();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RunRecord run_training(const TrainConfig& cfg, const data::DatasetSplits& splits,
                       const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = cfg;
  rec.spec = splits.train.spec;
  Trainer trainer(cfg, splits.train);
  const int K = trainer.model().modalities();

  std::filesystem::path dir;
  if (opts.out_dir) {
    dir = *opts.out_dir;
    std::filesystem::create_directories(dir / "partitions");
    if (opts.save_checkpoints) std::filesystem::create_directories(dir / "checkpoints");
  }

  auto persist = [&](bool complete) {
    if (!opts.out_dir) return;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_csv(rec, dir / "run.csv");
    write_metrics_csv(rec, dir / "metrics.csv");
    write_angles_csv(rec, dir / "angles.csv");
    write_run_json(rec, dir / "run.json", complete);
  };

  auto eval_rows = [&](int epoch, const std::string& split, const data::MultimodalDataset& ds) {
    const auto& m = trainer.model();
    rec.metrics.push_back({epoch, split, "multimodal", "accuracy", metrics::accuracy(m, ds, metrics::kMultimodal)});
    for (auto mode : {model::UniMode::Head, model::UniMode::ZeroMask}) {
      for (int k = 0; k < K; ++k) {
        rec.metrics.push_back({epoch, split, model::to_string(mode),
                               "accuracy_" + data::modality_name(k), metrics::accuracy(m, ds, k, mode)});
      }
      const auto rho = metrics::imbalance_ratio(m, ds, mode);
      rec.metrics.push_back({epoch, split, model::to_string(mode), "rho", rho.rho});
    }
  };

  try {
    for (int e = 0; e < cfg.total_epochs; ++e) {
      EpochResult r = trainer.run_epoch(splits.train);
      if (r.partition) {
        if (opts.out_dir) remix::write_partition_csv(*r.partition, epoch_file(dir / "partitions", "epoch_", e, ".csv"));
        rec.partitions.push_back(std::move(*r.partition));
      }
      rec.angles.insert(rec.angles.end(), r.angles.begin(), r.angles.end());

      const bool due = (e + 1) % cfg.eval_cadence == 0 || e + 1 == cfg.total_epochs;
      if (due) {
        EpochRow row;
        row.stats = std::move(r.stats);
        if (cfg.evaluate && !splits.val.empty()) {
          const auto& m = trainer.model();
          row.evaluated = true;
          row.train_acc = metrics::accuracy(m, splits.train, metrics::kMultimodal);
          row.val_acc = metrics::accuracy(m, splits.val, metrics::kMultimodal);
          for (int k = 0; k < K; ++k) row.val_acc_uni.push_back(metrics::accuracy(m, splits.val, k, cfg.uni_mode));
          row.rho = metrics::imbalance_ratio(m, splits.val, cfg.uni_mode);
          row.rho.epoch = e;
          rec.metrics.push_back({e, "train", "multimodal", "accuracy", row.train_acc});
          eval_rows(e, "val", splits.val);
        }
        rec.rows.push_back(std::move(row));
      }
      if (opts.out_dir && opts.save_checkpoints && cfg.checkpoint_every > 0 &&
          (e + 1) % cfg.checkpoint_every == 0) {
        model::save_checkpoint(trainer.checkpoint(), epoch_file(dir / "checkpoints", "epoch_", e, ".json"));
      }
    }
    if (!splits.test.empty()) {
      rec.final_metrics = evaluate_final(trainer.model(), splits.test);
      eval_rows(cfg.total_epochs, "test", splits.test);
    }
  } catch (const TrainAbort& a) {
    rec.aborted = true;
    rec.abort_reason = a.what();
    persist(false);
    if (opts.out_dir) {
      json diag{{"schema_version", kSchemaVersion},
                {"epoch", a.epoch()},
                {"reason", a.what()},
                {"last_batch_ids", a.batch_ids()}};
      std::ofstream(dir / "abort.json") << diag.dump(2) << '\n';
    }
    throw;
  }

  if (opts.out_dir && opts.save_checkpoints) {
    model::save_checkpoint(trainer.checkpoint(), dir / "checkpoints" / "final.json");
  }
  persist(true);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace remixlab::train
