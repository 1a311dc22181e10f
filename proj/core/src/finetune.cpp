#include "s2x/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "s2x/ops.hpp"
#include "s2x/pca.hpp"

namespace s2x {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor clone_leaf(const Tensor& t) { return Tensor::from(t.shape(), t.values()); }

}  // namespace

void FinetuneConfig::validate() const {
  if (epochs < 0) throw ParamError("epochs must be >= 0");
  if (batch < 0) throw ParamError("batch size must be >= 0 (0 meaning all train pixels)");
  if (!(lr > 0.0)) throw ParamError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ParamError("lr decay must be in (0,1]");
  if (lambda < 0.0) throw ParamError("trajectory weight lambda must be >= 0");
  if (traj_draws < 1) throw ParamError("need at least one trajectory draw");
  if (shots < 1) throw ParamError("shots must be >= 1");
  if (window < 1 || window % 2 == 0) throw ParamError("window must be odd and positive");
  if (patch < 1 || window % patch != 0) throw ParamError("patch must divide the window");
}

uint64_t params_digest(const ParamStore& ps) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& name : ps.names()) {
    mix(name.data(), name.size());
    const auto& v = ps.get(name).values();
    mix(v.data(), v.size() * sizeof(double));
  }
  return h;
}

TeacherStudent make_teacher_student(const ParamStore& pretrained, const EncoderConfig& encoder,
                                    int64_t classes, uint64_t seed) {
  if (classes < 2) throw ParamError("classification needs at least two classes");
  EncoderConfig cfg = encoder;
  cfg.with_class_token = true;
  cfg.validate();

  // The class token is new at this stage (pretraining runs without one),
  // so it comes from the fresh init; everything else must be present.
  ParamStore expected = init_encoder_params(cfg, seed);
  std::string diff;
  for (const auto& name : expected.names()) {
    if (!pretrained.has(name)) {
      if (name == "encoder/cls_token") continue;
      diff += "\n  missing tensor " + name + " " + shape_str(expected.get(name).shape());
    } else if (pretrained.get(name).shape() != expected.get(name).shape()) {
      diff += "\n  shape mismatch " + name + ": expected " +
              shape_str(expected.get(name).shape()) + ", got " +
              shape_str(pretrained.get(name).shape());
    }
  }
  if (!diff.empty())
    throw ContractError("pretrained parameters do not fit this encoder:" + diff);

  TeacherStudent ts;
  ts.config = cfg;
  ts.classes = classes;
  for (const auto& name : expected.names()) {
    const Tensor& src = pretrained.has(name) ? pretrained.get(name) : expected.get(name);
    ts.teacher.add(name, clone_leaf(src));
    ts.student.add(name, clone_leaf(src));
  }
  Rng head_rng(derive_seed(seed, seed_tag::head));
  ts.student.add("head/weight", Tensor::randn({cfg.width, classes}, head_rng, 0.0, 0.02));
  ts.student.add("head/bias", Tensor::zeros({classes}));
  ts.teacher.set_requires_grad(false);
  ts.student.set_requires_grad(true);
  ts.teacher_digest = params_digest(ts.teacher);
  return ts;
}

void assert_teacher_frozen(const TeacherStudent& ts) {
  for (const auto& name : ts.teacher.names())
    if (ts.teacher.get(name).requires_grad())
      throw ContractError("teacher parameter " + name + " takes gradients");
  if (params_digest(ts.teacher) != ts.teacher_digest)
    throw ContractError("teacher parameters changed since construction");
}

Tensor class_feature(const EncodeResult& enc) {
  const Tensor& f = enc.fused;
  if (!f.defined() || f.rank() != 3)
    throw ShapeError("class features need B x N x D fused output");
  const int64_t B = f.dim(0);
  std::vector<int64_t> first(static_cast<size_t>(B), 0);
  return reshape(gather_rows(f, first, 1), {B, f.dim(2)});
}

Tensor classify(const Tensor& feature, const ParamStore& ps) {
  if (!feature.defined() || feature.rank() != 2)
    throw ShapeError("classifier expects B x D features");
  return add(matmul(feature, ps.get("head/weight")), ps.get("head/bias"));
}

Tensor snr_weighted_ce(const Tensor& logits, const std::vector<int64_t>& labels,
                       const std::vector<int64_t>& ts, const DiffusionSchedule& sched) {
  if (!logits.defined() || logits.rank() != 2)
    throw ShapeError("weighted cross entropy expects B x K logits");
  const int64_t B = logits.dim(0);
  const int64_t K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B || static_cast<int64_t>(ts.size()) != B)
    throw ShapeError("got " + std::to_string(labels.size()) + " labels and " +
                     std::to_string(ts.size()) + " timesteps for " + std::to_string(B) +
                     " samples");
  for (int64_t l : labels)
    if (l < 1 || l > K)
      throw ParamError("label " + std::to_string(l) + " outside 1.." + std::to_string(K));

  std::vector<int> labels32(labels.begin(), labels.end());
  Tensor ce = cross_entropy_with_logits(logits, labels32);  // {B}

  std::vector<double> w(static_cast<size_t>(B));
  double sum = 0.0;
  for (int64_t i = 0; i < B; ++i) {
    w[static_cast<size_t>(i)] = 1.0 / (1.0 + sched.snr_at(ts[static_cast<size_t>(i)]));
    sum += w[static_cast<size_t>(i)];
  }
  const double mean_w = sum / static_cast<double>(B);
  for (double& x : w) x /= mean_w;
  return mean_all(mul(ce, Tensor::from({B}, std::move(w))));
}

Tensor trajectory_term(const Tensor& f_s, const Tensor& f_t, int64_t* zero_rows) {
  Tensor cos = cosine_similarity(f_s, f_t, zero_rows);
  return mean_all(add_scalar(neg(cos), 1.0));
}

FinetuneParts finetune_step(const TokenBatch& batch, const std::vector<int64_t>& labels,
                            const TeacherStudent& ts, const DiffusionSchedule& sched,
                            double lambda, int64_t traj_draws, uint64_t step_seed) {
  const int64_t B = batch.batch();
  if (B < 1) throw ContractError("fine-tuning step needs a non-empty batch");
  if (static_cast<int64_t>(labels.size()) != B)
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(B) +
                     " samples");
  if (lambda < 0.0) throw ParamError("trajectory weight lambda must be >= 0");
  if (traj_draws < 1) throw ParamError("need at least one trajectory draw");
  for (const auto& m : batch.masked_idx)
    if (!m.empty()) throw ContractError("fine-tuning uses unmasked windows");
  if (!ts.config.with_class_token)
    throw ContractError("fine-tuning runs in class-token mode");
  assert_teacher_frozen(ts);

  // all timestep draws up front; the first one also weights the cross
  // entropy
  std::vector<std::vector<int64_t>> draws(static_cast<size_t>(traj_draws));
  for (int64_t k = 0; k < traj_draws; ++k) {
    Rng trng(derive_seed(step_seed, seed_tag::timestep, static_cast<uint64_t>(k)));
    draws[static_cast<size_t>(k)] = sample_timesteps(B, sched, trng);
  }

  FinetuneParts parts;
  double tsum = 0.0;
  for (int64_t t : draws[0]) tsum += static_cast<double>(t);
  parts.mean_t = tsum / static_cast<double>(B);

  Tensor t0 = time_embed(0, ts.config.width);
  EncodeResult clean = encode(batch.tokens, batch.visible_idx, t0, ts.student, ts.config);
  Tensor logits = classify(class_feature(clean), ts.student);
  parts.cls = snr_weighted_ce(logits, labels, draws[0], sched);

  if (lambda == 0.0) {
    parts.dta = Tensor::zeros({1});
    parts.total = parts.cls;
    return parts;
  }

  Tensor acc;
  for (int64_t k = 0; k < traj_draws; ++k) {
    Rng nrng(derive_seed(step_seed, seed_tag::noise, static_cast<uint64_t>(k)));
    NoiseResult nr = add_noise(batch.tokens, draws[static_cast<size_t>(k)], sched, nrng);
    Tensor t_emb = time_embed(draws[static_cast<size_t>(k)], ts.config.width);
    EncodeResult student = encode(nr.noised, batch.visible_idx, t_emb, ts.student, ts.config);
    EncodeResult teacher = encode(nr.noised, batch.visible_idx, t_emb, ts.teacher, ts.config);
    int64_t zero_rows = 0;
    Tensor term = trajectory_term(class_feature(student), class_feature(teacher), &zero_rows);
    parts.zero_norm_rows += zero_rows;
    acc = acc.defined() ? add(acc, term) : term;
  }
  parts.dta = mul_scalar(acc, 1.0 / static_cast<double>(traj_draws));
  parts.total = add(parts.cls, mul_scalar(parts.dta, lambda));
  return parts;
}

std::vector<int64_t> predict_labels(const HsiCube& cube,
                                    const std::vector<std::pair<int64_t, int64_t>>& coords,
                                    const ParamStore& ps, const EncoderConfig& config,
                                    int64_t window, int64_t patch, int64_t batch) {
  if (batch < 1) throw ParamError("prediction batch must be >= 1");
  EncoderConfig cfg = config;
  cfg.with_class_token = true;
  Tensor t0 = time_embed(0, cfg.width);
  std::vector<int64_t> out;
  out.reserve(coords.size());
  for (size_t lo = 0; lo < coords.size(); lo += static_cast<size_t>(batch)) {
    size_t hi = std::min(coords.size(), lo + static_cast<size_t>(batch));
    std::vector<std::pair<int64_t, int64_t>> slice(coords.begin() + static_cast<int64_t>(lo),
                                                   coords.begin() + static_cast<int64_t>(hi));
    TokenBatch tb = extract_patches(cube, slice, window, patch, 0.0, 1);
    EncodeResult enc = encode(tb.tokens, tb.visible_idx, t0, ps, cfg);
    Tensor logits = classify(class_feature(enc), ps);
    const auto& v = logits.values();
    const int64_t K = logits.dim(1);
    for (int64_t b = 0; b < static_cast<int64_t>(slice.size()); ++b) {
      int64_t best = 0;
      for (int64_t k = 1; k < K; ++k)
        if (v[static_cast<size_t>(b * K + k)] > v[static_cast<size_t>(b * K + best)]) best = k;
      out.push_back(best + 1);
    }
  }
  return out;
}

FinetuneOutcome finetune_loop(const HsiCube& cube, const LoadedCheckpoint& pretrained,
                              const FinetuneConfig& config, const std::string& out_dir) {
  config.validate();
  cube.validate();
  if (!cube.has_labels()) throw ContractError("fine-tuning needs a labeled scene");
  if (pretrained.meta.kind != "pretrain")
    throw ContractError("expected a pretraining checkpoint, got kind '" + pretrained.meta.kind +
                        "'");
  std::filesystem::create_directories(out_dir);

  HsiCube data;
  PcaModel pca;
  const bool use_pca = has_pca(pretrained.params);
  if (use_pca) {
    pca = pca_from_params(pretrained.params);
    if (pca.in_bands != cube.bands)
      throw ContractError("checkpoint band projection expects " + std::to_string(pca.in_bands) +
                          " bands, the scene has " + std::to_string(cube.bands));
    data = project_cube(pca, cube);
  } else {
    data = cube;
  }

  EncoderConfig enc = pretrained.meta.encoder;
  enc.with_class_token = true;
  if (enc.bands != data.bands)
    throw ContractError("checkpoint encoder expects " + std::to_string(enc.bands) +
                        " bands, the data has " + std::to_string(data.bands));

  const int64_t classes = cube.num_classes();
  TeacherStudent ts = make_teacher_student(pretrained.params, enc, classes, config.seed);
  if (use_pca) pca_to_params(pca, ts.student);  // frozen; rides into the checkpoint

  auto extra = [&](const char* key) -> const std::string& {
    auto it = pretrained.meta.extra.find(key);
    if (it == pretrained.meta.extra.end())
      throw ContractError("pretraining checkpoint lacks the '" + std::string(key) + "' field");
    return it->second;
  };
  DiffusionSchedule sched =
      build_schedule(std::stoll(extra("timesteps")), std::stod(extra("beta_min")),
                     std::stod(extra("beta_max")));

  FewShotSplit split = sample_few_shot(cube, config.shots, config.seed);
  std::vector<std::pair<int64_t, int64_t>> train = split.all_train();
  const int64_t n = static_cast<int64_t>(train.size());
  const int64_t step_size = config.batch == 0 ? n : std::min(config.batch, n);
  const int64_t steps_per_epoch = (n + step_size - 1) / step_size;

  Adam opt(ts.student);

  const std::string ckpt_path = out_dir + "/student.ckpt";
  const std::string log_path = out_dir + "/finetune_log.tsv";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw FormatError(log_path + ": cannot open for writing");
  log << "epoch\tstep\tt\tL_cls\tL_dta\tL_daft\tlambda\tlr\n";

  FinetuneOutcome out;
  out.checkpoint_path = ckpt_path;
  out.log_path = log_path;

  int64_t warned_zero_rows = 0;
  for (int64_t e = 0; e < config.epochs; ++e) {
    const double lr_e = config.lr * std::pow(config.lr_decay, static_cast<double>(e));
    auto order = train;
    Rng shuffle_rng(derive_seed(config.seed, seed_tag::shuffle, static_cast<uint64_t>(e)));
    shuffle_rng.shuffle(order);
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const int64_t lo = s * step_size;
      const int64_t hi = std::min<int64_t>(lo + step_size, n);
      std::vector<std::pair<int64_t, int64_t>> slice(order.begin() + lo, order.begin() + hi);
      const uint64_t step_seed =
          derive_seed(config.seed, seed_tag::step, static_cast<uint64_t>(e * steps_per_epoch + s));
      TokenBatch tb = extract_patches(data, slice, config.window, config.patch, 0.0, step_seed);
      std::vector<int64_t> labels;
      labels.reserve(slice.size());
      for (const auto& yx : slice)
        labels.push_back(static_cast<int64_t>(cube.label_at(yx.first, yx.second)));

      FinetuneParts parts =
          finetune_step(tb, labels, ts, sched, config.lambda, config.traj_draws, step_seed);
      backward(parts.total);
      opt.step(lr_e);
      ts.student.zero_grad();

      if (parts.zero_norm_rows > 0 && warned_zero_rows == 0)
        std::fprintf(stderr, "warning: %lld zero-norm feature rows in the trajectory term\n",
                     static_cast<long long>(parts.zero_norm_rows));
      warned_zero_rows += parts.zero_norm_rows;

      log << e << "\t" << s << "\t" << fmt9(parts.mean_t) << "\t"
          << fmt9(parts.cls.scalar_value()) << "\t" << fmt9(parts.dta.scalar_value()) << "\t"
          << fmt9(parts.total.scalar_value()) << "\t" << fmt9(config.lambda) << "\t" << fmt9(lr_e)
          << "\n";
      ++out.steps_run;
    }
    out.epochs_completed = e + 1;
  }

  CheckpointMeta meta;
  meta.kind = "finetune";
  meta.epoch = out.epochs_completed;
  meta.adam_step = opt.step_count();
  meta.encoder = ts.config;
  meta.extra["classes"] = std::to_string(classes);
  meta.extra["lambda"] = fmt17(config.lambda);
  meta.extra["traj_draws"] = std::to_string(config.traj_draws);
  meta.extra["shots"] = std::to_string(config.shots);
  meta.extra["window"] = std::to_string(config.window);
  meta.extra["patch"] = std::to_string(config.patch);
  meta.extra["timesteps"] = extra("timesteps");
  meta.extra["beta_min"] = extra("beta_min");
  meta.extra["beta_max"] = extra("beta_max");
  meta.extra["seed"] = std::to_string(config.seed);
  meta.extra["input_bands"] = std::to_string(cube.bands);
  quantize_params(ts.student);
  save_checkpoint(ckpt_path, meta, ts.student, &opt);

  std::vector<std::pair<int64_t, int64_t>> test = split.all_test();
  if (test.empty()) throw ContractError("no labeled pixels left outside the train split");
  ts.student.set_requires_grad(false);
  std::vector<int64_t> preds =
      predict_labels(data, test, ts.student, ts.config, config.window, config.patch);
  std::vector<int64_t> truth;
  truth.reserve(test.size());
  for (const auto& yx : test)
    truth.push_back(static_cast<int64_t>(cube.label_at(yx.first, yx.second)));
  out.eval = score(tally(truth, preds, classes));

  log.flush();
  if (!log) throw FormatError(log_path + ": write failed");
  return out;
}

}  // namespace s2x
