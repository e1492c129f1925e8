#include "raincycle/engine.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "raincycle/error.hpp"

namespace fs = std::filesystem;

namespace raincycle {

namespace {

// rng stream tags
constexpr uint64_t kStreamAttTarget = 2001;
constexpr uint64_t kStreamGmmFit = 3001;
constexpr uint64_t kStreamAugment = 4001;

Tensor encode_text(const std::string& s) {
  Tensor t({static_cast<int>(s.size())});
  for (size_t i = 0; i < s.size(); ++i) {
    t.data[i] = static_cast<double>(static_cast<uint8_t>(s[i]));
  }
  return t;
}

std::string decode_text(const Tensor& t) {
  std::string s;
  s.reserve(t.data.size());
  for (double v : t.data) s.push_back(static_cast<char>(static_cast<uint8_t>(v)));
  return s;
}

void append_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot open for append: " + path);
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace

Adam Adam::from_config(const TrainingConfig& cfg) {
  Adam a;
  a.beta1 = cfg.adam_beta1;
  a.beta2 = cfg.adam_beta2;
  a.eps = cfg.adam_eps;
  a.weight_decay = cfg.weight_decay;
  return a;
}

void Adam::zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

void Adam::scale_grad(const std::vector<Parameter*>& params, double s) {
  for (Parameter* p : params) {
    for (double& g : p->grad.data) g *= s;
  }
}

void Adam::step(const std::vector<Parameter*>& params, double lr) {
  ++steps;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (Parameter* p : params) {
    const size_t n = p->value.data.size();
    for (size_t i = 0; i < n; ++i) {
      const double g = p->grad.data[i];
      p->m.data[i] = beta1 * p->m.data[i] + (1.0 - beta1) * g;
      p->v.data[i] = beta2 * p->v.data[i] + (1.0 - beta2) * g * g;
      const double mh = p->m.data[i] / bc1;
      const double vh = p->v.data[i] / bc2;
      double upd = mh / (std::sqrt(vh) + eps);
      if (p->decay) upd += weight_decay * p->value.data[i];
      p->value.data[i] -= lr * upd;
    }
  }
}

double lr_at_epoch(const TrainingConfig& cfg, int epoch) {
  if (epoch <= cfg.lr_decay_start) return cfg.lr;
  const double span = static_cast<double>(cfg.epochs - cfg.lr_decay_start) + 1.0;
  return cfg.lr * (1.0 - static_cast<double>(epoch - cfg.lr_decay_start) / span);
}

Trainer::Trainer(const TrainingConfig& cfg_)
    : cfg(cfg_),
      bundle(cfg_),
      opt_g(Adam::from_config(cfg_)),
      opt_d(Adam::from_config(cfg_)),
      gmm(GmmModel::unit(cfg_.gmm_k)) {
  validate_config(cfg);
  perceptual = cfg.perceptual_mode == "archive"
                   ? PerceptualExtractor::from_archive(cfg.perceptual_archive)
                   : PerceptualExtractor::fixed(cfg.perceptual_width, cfg.perceptual_seed);
}

LossBreakdown Trainer::train_step(const std::vector<std::pair<Image, Image>>& batch,
                                  int epoch, int step_in_epoch, std::vector<double>* pool) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const LossWeights w = LossWeights::from_config(cfg);
  const bool do_adv = w.en_adv && w.adv > 0.0;
  const double lr = lr_at_epoch(cfg, epoch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBreakdown bd;

  struct Built {
    Tape t;
    Var r, n;
    TranslateForward fw;
    TranslateBackward bw;
  };
  std::vector<std::unique_ptr<Built>> built;
  for (const auto& [r_img, n_img] : batch) {
    r_img.require_min_dims(16, "train_step");
    n_img.require_min_dims(16, "train_step");
    auto b = std::make_unique<Built>();
    b->r = b->t.leaf(r_img.t);
    b->n = b->t.leaf(n_img.t);
    b->fw = translate_forward(b->t, bundle, b->r, b->n);
    b->bw = translate_backward(b->t, bundle, b->fw.n_r, b->fw.r_n);
    built.push_back(std::move(b));
  }

  const std::vector<Parameter*> dparams = bundle.discriminator_params();
  if (do_adv) {
    Adam::zero_grad(dparams);
    for (size_t i = 0; i < batch.size(); ++i) {
      Tape td;
      const Var real_n = td.leaf(batch[i].second.t);
      const Var real_r = td.leaf(batch[i].first.t);
      const Var fake_n = td.leaf(built[i]->t.val(built[i]->fw.n_r));
      const Var fake_r = td.leaf(built[i]->t.val(built[i]->fw.r_n));
      const AdvPair adv_n =
          adversarial_losses(td, bundle.d_n.forward(td, real_n), bundle.d_n.forward(td, fake_n));
      const AdvPair adv_r =
          adversarial_losses(td, bundle.d_r.forward(td, real_r), bundle.d_r.forward(td, fake_r));
      const Var d_total = td.add(adv_n.d_loss, adv_r.d_loss);
      bd.d_loss += td.val(d_total)[0] * inv_b;
      td.backward(d_total);
      td.collect_param_grads();
    }
    Adam::scale_grad(dparams, inv_b);
    opt_d.step(dparams, lr);
  }

  const std::vector<Parameter*> gparams = bundle.generator_params();
  Adam::zero_grad(gparams);
  for (size_t i = 0; i < batch.size(); ++i) {
    Built& b = *built[i];
    Tape& t = b.t;
    LossTerms terms;
    if (do_adv) {
      const Var g_n_term = adversarial_g_loss(t, bundle.d_n.forward(t, b.fw.n_r));
      const Var g_r_term = adversarial_g_loss(t, bundle.d_r.forward(t, b.fw.r_n));
      terms.adv = t.add(g_n_term, g_r_term);
    }
    if (w.en_att) {
      Rng att_rng(Rng::derive(cfg.seed, kStreamAttTarget,
                              static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(step_in_epoch) * batch.size() + i));
      const Tensor target = sample_attention_target(t.val(b.fw.att_r).shape,
                                                    cfg.att_prior_std, cfg.att_prior_mode,
                                                    att_rng);
      terms.att = attention_loss(t, b.fw.att_r, b.fw.att_n, t.leaf(target));
    }
    if (w.en_cc) terms.cc = cycle_loss(t, b.r, b.bw.r_tilde, b.n, b.bw.n_tilde);
    if (w.en_p) terms.p = perceptual_loss(t, b.fw.n_r, b.r, perceptual);
    if (w.en_gmm) terms.gmm = t.gmm_nll(t.sub(b.r, b.fw.n_r), gmm);
    if (w.en_r) terms.r = reconstructive_loss(t, b.fw.att_r, b.fw.n_r, b.r);
    if (w.en_id) {
      const Var id_n = bundle.g_n.forward(t, b.fw.att_n, b.n);
      const Var id_r = bundle.g_r.forward(t, b.fw.att_r, b.r);
      terms.id = t.add(t.mae(id_n, b.n), t.mae(id_r, b.r));
    }
    const Var total = total_loss(t, terms, w);

    auto grab = [&](Var v) { return v.valid() ? t.val(v)[0] : 0.0; };
    bd.adv += grab(terms.adv) * inv_b;
    bd.att += grab(terms.att) * inv_b;
    bd.cc += grab(terms.cc) * inv_b;
    bd.p += grab(terms.p) * inv_b;
    bd.gmm += grab(terms.gmm) * inv_b;
    bd.r += grab(terms.r) * inv_b;
    bd.id += grab(terms.id) * inv_b;
    bd.total += t.val(total)[0] * inv_b;

    if (!std::isfinite(t.val(total)[0])) {
      throw NumericError("training aborted: non-finite total loss; last good checkpoint: " +
                         (last_checkpoint.empty() ? std::string("none") : last_checkpoint));
    }

    if (pool) {
      const Tensor& n_r = t.val(b.fw.n_r);
      const Tensor& r_in = t.val(b.r);
      for (size_t k = 0; k < n_r.data.size(); ++k) {
        pool->push_back(r_in.data[k] - n_r.data[k]);
      }
    }

    t.backward(total);
    t.collect_param_grads();
  }
  Adam::scale_grad(gparams, inv_b);
  opt_g.step(gparams, lr);
  return bd;
}

std::string Trainer::train(const std::string& out_dir) {
  validate_config(cfg);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());

  const DatasetLayout layout{cfg.data_root};
  const std::vector<std::string> rain_names = list_pngs(layout.rain_dir());
  const std::vector<std::string> norain_names = list_pngs(layout.norain_dir());
  std::vector<Image> rains, norains;
  rains.reserve(rain_names.size());
  norains.reserve(norain_names.size());
  for (const std::string& name : rain_names) {
    rains.push_back(load_png(layout.rain_dir() + "/" + name).replicate_gray());
  }
  for (const std::string& name : norain_names) {
    norains.push_back(load_png(layout.norain_dir() + "/" + name).replicate_gray());
  }
  for (const Image& img : rains) {
    if (img.height() < cfg.crop || img.width() < cfg.crop) {
      throw DatasetError("dataset: rain image smaller than crop size");
    }
  }
  for (const Image& img : norains) {
    if (img.height() < cfg.crop || img.width() < cfg.crop) {
      throw DatasetError("dataset: norain image smaller than crop size");
    }
  }

  const std::string log_path = out_dir + "/train-log.csv";
  const std::string em_path = out_dir + "/em-trajectory.csv";
  if (epochs_done == 0 || !fs::exists(log_path)) {
    write_text_file(log_path, "step,epoch,lr,l_adv,l_att,l_cc,l_p,l_gmm,l_r,total\n");
  }
  if (epochs_done == 0 || !fs::exists(em_path)) {
    write_text_file(em_path, "epoch,iter,nll\n");
  }

  const int pairs_per_epoch =
      static_cast<int>(std::max(rains.size(), norains.size()));
  const int steps_per_epoch = (pairs_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  int64_t global_step = static_cast<int64_t>(epochs_done) * steps_per_epoch;

  std::vector<double> pool;
  char line[400];
  for (int epoch = epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    const auto pairs = unpaired_pair_indices(static_cast<int>(rains.size()),
                                             static_cast<int>(norains.size()), cfg.seed,
                                             static_cast<uint64_t>(epoch));
    pool.clear();
    std::string rows;
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<std::pair<Image, Image>> batch;
      for (int k = 0; k < cfg.batch_size; ++k) {
        const int idx = s * cfg.batch_size + k;
        if (idx >= pairs_per_epoch) break;
        const uint64_t tag = static_cast<uint64_t>(idx);
        AugmentSpec ar{cfg.crop, cfg.flip_probability,
                       Rng::derive(cfg.seed, kStreamAugment, static_cast<uint64_t>(epoch),
                                   2 * tag)};
        AugmentSpec an{cfg.crop, cfg.flip_probability,
                       Rng::derive(cfg.seed, kStreamAugment, static_cast<uint64_t>(epoch),
                                   2 * tag + 1)};
        batch.emplace_back(augment(rains[static_cast<size_t>(pairs[static_cast<size_t>(idx)].first)], ar),
                           augment(norains[static_cast<size_t>(pairs[static_cast<size_t>(idx)].second)], an));
      }
      const LossBreakdown bd = train_step(batch, epoch, s, &pool);
      ++global_step;
      std::snprintf(line, sizeof(line),
                    "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    static_cast<long long>(global_step), epoch, lr, bd.adv, bd.att, bd.cc,
                    bd.p, bd.gmm, bd.r, bd.total);
      rows += line;
    }
    append_text(log_path, rows);

    if (cfg.enable_gmm && epoch % cfg.gmm_refit_interval == 0) {
      const EmResult fit = gmm_em_fit(pool, cfg.gmm_k, cfg.gmm_em_iters,
                                      Rng::derive(cfg.seed, kStreamGmmFit,
                                                  static_cast<uint64_t>(epoch)));
      gmm = fit.model;
      std::string em_rows;
      for (size_t i = 0; i < fit.nll_trajectory.size(); ++i) {
        std::snprintf(line, sizeof(line), "%d,%zu,%.17g\n", epoch, i,
                      fit.nll_trajectory[i]);
        em_rows += line;
      }
      append_text(em_path, em_rows);
    }

    epochs_done = epoch;
    if (epoch % cfg.checkpoint_interval == 0 || epoch == cfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint-epoch-%04d.rcta", epoch);
      const std::string path = out_dir + name;
      save_checkpoint(path, cfg, bundle, opt_g, opt_d, epochs_done, gmm);
      last_checkpoint = path;
    }
  }
  const std::string final_path = out_dir + "/checkpoint-final.rcta";
  save_checkpoint(final_path, cfg, bundle, opt_g, opt_d, epochs_done, gmm);
  last_checkpoint = final_path;
  return final_path;
}

void save_checkpoint(const std::string& path, const TrainingConfig& cfg,
                     ModelBundle& bundle, const Adam& opt_g, const Adam& opt_d,
                     int epochs_done, const GmmModel& gmm) {
  Archive a;
  a.config_hash = config_hash(cfg);
  for (Parameter* p : bundle.all_params()) {
    a.tensors.push_back({p->name, p->value});
    a.tensors.push_back({p->name + ".adam_m", p->m});
    a.tensors.push_back({p->name + ".adam_v", p->v});
  }
  a.tensors.push_back({"__state.epochs_done", Tensor::scalar(epochs_done)});
  a.tensors.push_back({"__state.opt_g_steps", Tensor::scalar(static_cast<double>(opt_g.steps))});
  a.tensors.push_back({"__state.opt_d_steps", Tensor::scalar(static_cast<double>(opt_d.steps))});
  Tensor pi({gmm.components()});
  Tensor sigma({gmm.components()});
  for (int k = 0; k < gmm.components(); ++k) {
    pi.data[static_cast<size_t>(k)] = gmm.pi[static_cast<size_t>(k)];
    sigma.data[static_cast<size_t>(k)] = gmm.sigma[static_cast<size_t>(k)];
  }
  a.tensors.push_back({"__state.gmm.pi", pi});
  a.tensors.push_back({"__state.gmm.sigma", sigma});
  a.tensors.push_back({"__state.gmm.floored", Tensor::scalar(gmm.floored ? 1.0 : 0.0)});
  a.tensors.push_back({"__config.text", encode_text(effective_config_text(cfg))});
  save_archive(path, a);
}

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint c;
  c.archive = load_archive(path);
  c.cfg = parse_config_text(decode_text(c.archive.find("__config.text")));
  if (config_hash(c.cfg) != c.archive.config_hash) {
    throw IoError("checkpoint: embedded config does not match recorded hash: " + path);
  }
  c.epochs_done = static_cast<int>(c.archive.find("__state.epochs_done")[0]);
  c.opt_g_steps = static_cast<int64_t>(c.archive.find("__state.opt_g_steps")[0]);
  c.opt_d_steps = static_cast<int64_t>(c.archive.find("__state.opt_d_steps")[0]);
  const Tensor& pi = c.archive.find("__state.gmm.pi");
  const Tensor& sigma = c.archive.find("__state.gmm.sigma");
  c.gmm.pi.assign(pi.data.begin(), pi.data.end());
  c.gmm.sigma.assign(sigma.data.begin(), sigma.data.end());
  c.gmm.floored = c.archive.find("__state.gmm.floored")[0] != 0.0;
  return c;
}

void Trainer::resume_from(const Checkpoint& ckpt) {
  if (config_hash(ckpt.cfg) != config_hash(cfg)) {
    throw ConfigError("resume: checkpoint config differs from the requested config");
  }
  bundle.load_from(ckpt.archive);
  for (Parameter* p : bundle.all_params()) {
    const Tensor& m = ckpt.archive.find(p->name + ".adam_m");
    const Tensor& v = ckpt.archive.find(p->name + ".adam_v");
    if (m.shape != p->value.shape || v.shape != p->value.shape) {
      throw IoError("resume: optimizer moment shape mismatch for " + p->name);
    }
    p->m = m;
    p->v = v;
  }
  opt_g.steps = ckpt.opt_g_steps;
  opt_d.steps = ckpt.opt_d_steps;
  gmm = ckpt.gmm;
  gmm.validate();
  epochs_done = ckpt.epochs_done;
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
  ModelBundle b(ckpt.cfg);
  b.load_from(ckpt.archive);
  return b;
}

DerainResult derain_with(ModelBundle& bundle, const Image& rainy) {
  rainy.require_valid("derain");
  rainy.require_min_dims(16, "derain");
  const Image input = rainy.replicate_gray();
  const Image padded = pad_to_multiple(input, 8);
  Tape t;
  const Var r = t.leaf(padded.t);
  const Var att = bundle.uarse.forward(t, r).final_mask;
  const Var n_r = bundle.g_n.forward(t, att, r);
  Image derained(t.val(n_r));
  Image mask(t.val(att));
  DerainResult out;
  out.derained = crop(derained, 0, 0, rainy.height(), rainy.width());
  out.mask = crop(mask, 0, 0, rainy.height(), rainy.width());
  return out;
}

DerainResult derain(const Checkpoint& ckpt, const Image& rainy) {
  ModelBundle bundle = bundle_from_checkpoint(ckpt);
  return derain_with(bundle, rainy);
}

void rainmake(const Checkpoint& ckpt, const std::string& clean_dir,
              const std::string& out_root) {
  const std::vector<std::string> names = list_pngs(clean_dir);
  ModelBundle bundle = bundle_from_checkpoint(ckpt);
  const std::string rain = out_root + "/rain";
  const std::string norain = out_root + "/norain";
  for (const std::string& d : {rain, norain}) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create directory " + d + ": " + ec.message());
  }
  for (const std::string& name : names) {
    const Image clean = load_png(clean_dir + "/" + name).replicate_gray();
    clean.require_min_dims(16, "rainmake");
    const Image padded = pad_to_multiple(clean, 8);
    Tape t;
    const Var n = t.leaf(padded.t);
    const Var att = bundle.uarse.forward(t, n).final_mask;
    const Var r_n = bundle.g_r.forward(t, att, n);
    const Image rainy = crop(Image(t.val(r_n)), 0, 0, clean.height(), clean.width());
    save_png(rain + "/" + name, rainy);
    save_png(norain + "/" + name, clean);
  }
  nlohmann::json manifest;
  manifest["source_dir"] = clean_dir;
  manifest["pairs"] = names.size();
  manifest["config_hash"] = ckpt.archive.config_hash;
  manifest["generator"] = "rain-adding branch over attention masks";
  write_text_file(out_root + "/manifest.json", manifest.dump(2) + "\n");
}

MetricReport evaluate(const Checkpoint& ckpt, const std::string& pairs_root) {
  const std::vector<PairedSample> pairs = load_paired(pairs_root);
  ModelBundle bundle = bundle_from_checkpoint(ckpt);
  MetricReport report;
  for (const PairedSample& s : pairs) {
    const DerainResult d = derain_with(bundle, s.rainy);
    MetricRow row;
    row.name = s.name;
    row.psnr_db = psnr(d.derained, s.clean, 255.0, ckpt.cfg.metric_luma);
    row.ssim_val = ssim(d.derained, s.clean, ckpt.cfg.metric_luma);
    report.rows.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

}  // namespace raincycle
