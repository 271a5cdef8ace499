#include "rpf/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "rpf/core/parallel.hpp"

namespace rpf::train {

namespace fs = std::filesystem;
using core::Rng;
using core::Tensor;
using nn::Variable;

void TrainConfig::validate() const {
    model.validate();
    loss.validate();
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (crop < 1) throw std::invalid_argument("TrainConfig: crop must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (lr0 <= 0.0) throw std::invalid_argument("TrainConfig: lr0 must be positive");
    if (lr_decay_every < 1) throw std::invalid_argument("TrainConfig: lr_decay_every must be >= 1");
    if (!synthetic && (ir_dir.empty() || vis_dir.empty()))
        throw std::invalid_argument("TrainConfig: ir_dir/vis_dir required unless synthetic");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr0 * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

// ------------------------------------------------------------- config binding

namespace {

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "model.stages", "model.channels", "model.dilation_rates", "model.use_cpm",
        "model.use_residual_branch", "model.fdfm_mode",
        "loss.lambda1", "loss.lambda2", "loss.eps", "loss.ssim_window", "loss.ssim_sigma",
        "loss.ssim_printed_form", "loss.contrastive", "loss.use_adaptive_weight",
        "loss.use_ssim", "loss.use_saliency",
        "train.lr0", "train.lr_decay_every", "train.lr_decay", "train.batch", "train.crop",
        "train.epochs", "train.max_steps", "train.seed", "train.aux_grad_to_backbone",
        "train.threads",
        "data.ir_dir", "data.vis_dir", "data.synthetic", "data.synthetic_count",
        "data.synthetic_size",
        "fuse.checkpoint", "eval.checkpoint",
        "psd.images", "psd.ir_dir", "psd.vis_dir",
        "ablate.cases",
    };
    return keys;
}

const std::vector<std::pair<std::string, std::string>>& key_aliases() {
    static const std::vector<std::pair<std::string, std::string>> aliases = {
        {"stages", "model.stages"},       {"N", "model.stages"},
        {"channels", "model.channels"},   {"fdfm_mode", "model.fdfm_mode"},
        {"lambda1", "loss.lambda1"},      {"lambda2", "loss.lambda2"},
        {"epochs", "train.epochs"},       {"batch", "train.batch"},
        {"crop", "train.crop"},           {"seed", "train.seed"},
        {"lr0", "train.lr0"},             {"max_steps", "train.max_steps"},
        {"threads", "train.threads"},     {"ir_dir", "data.ir_dir"},
        {"vis_dir", "data.vis_dir"},      {"synthetic", "data.synthetic"},
        {"checkpoint", "fuse.checkpoint"},
    };
    return aliases;
}

}  // namespace

std::string canonical_config_key(const std::string& key) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) return key;
    for (const auto& [alias, canonical] : key_aliases())
        if (alias == key) return canonical;
    throw std::runtime_error("unknown config key: " + key);
}

TrainConfig train_config_from(const io::Config& cfg) {
    for (const auto& [key, value] : cfg.items()) canonical_config_key(key);  // reject unknowns

    TrainConfig out;
    out.model.stages = static_cast<int>(cfg.get_int("model.stages", out.model.stages));
    out.model.channels = static_cast<int>(cfg.get_int("model.channels", out.model.channels));
    out.model.dilation_rates = cfg.get_int_list("model.dilation_rates", out.model.dilation_rates);
    out.model.use_cpm = cfg.get_bool("model.use_cpm", out.model.use_cpm);
    out.model.use_residual_branch =
        cfg.get_bool("model.use_residual_branch", out.model.use_residual_branch);
    const std::string fdfm = cfg.get_string("model.fdfm_mode", "frequency");
    if (fdfm == "frequency")
        out.model.fdfm_mode = net::FdfmMode::Frequency;
    else if (fdfm == "transformer_sub")
        out.model.fdfm_mode = net::FdfmMode::TransformerSub;
    else
        throw std::runtime_error("model.fdfm_mode must be frequency or transformer_sub");

    out.loss.lambda1 = cfg.get_double("loss.lambda1", out.loss.lambda1);
    out.loss.lambda2 = cfg.get_double("loss.lambda2", out.loss.lambda2);
    out.loss.eps = cfg.get_double("loss.eps", out.loss.eps);
    out.loss.ssim_window = static_cast<int>(cfg.get_int("loss.ssim_window", out.loss.ssim_window));
    out.loss.ssim_sigma = cfg.get_double("loss.ssim_sigma", out.loss.ssim_sigma);
    out.loss.ssim_printed_form =
        cfg.get_bool("loss.ssim_printed_form", out.loss.ssim_printed_form);
    const std::string contrastive = cfg.get_string("loss.contrastive", "adaptive_freq");
    if (contrastive == "adaptive_freq")
        out.loss.contrastive = loss::ContrastiveMode::AdaptiveFreq;
    else if (contrastive == "plain_freq_l1")
        out.loss.contrastive = loss::ContrastiveMode::PlainFreqL1;
    else if (contrastive == "spatial")
        out.loss.contrastive = loss::ContrastiveMode::Spatial;
    else
        throw std::runtime_error(
            "loss.contrastive must be adaptive_freq, plain_freq_l1 or spatial");
    out.loss.use_adaptive_weight =
        cfg.get_bool("loss.use_adaptive_weight", out.loss.use_adaptive_weight);
    out.loss.use_ssim = cfg.get_bool("loss.use_ssim", out.loss.use_ssim);
    out.loss.use_saliency = cfg.get_bool("loss.use_saliency", out.loss.use_saliency);

    out.lr0 = cfg.get_double("train.lr0", out.lr0);
    out.lr_decay_every = static_cast<int>(cfg.get_int("train.lr_decay_every", out.lr_decay_every));
    out.lr_decay = cfg.get_double("train.lr_decay", out.lr_decay);
    out.batch = static_cast<int>(cfg.get_int("train.batch", out.batch));
    out.crop = static_cast<int>(cfg.get_int("train.crop", out.crop));
    out.epochs = static_cast<int>(cfg.get_int("train.epochs", out.epochs));
    out.max_steps = static_cast<int>(cfg.get_int("train.max_steps", out.max_steps));
    out.seed = static_cast<uint64_t>(cfg.get_int("train.seed", static_cast<int64_t>(out.seed)));
    out.aux_grad_to_backbone =
        cfg.get_bool("train.aux_grad_to_backbone", out.aux_grad_to_backbone);
    out.threads = static_cast<int>(cfg.get_int("train.threads", out.threads));

    out.ir_dir = cfg.get_string("data.ir_dir", out.ir_dir);
    out.vis_dir = cfg.get_string("data.vis_dir", out.vis_dir);
    out.synthetic = cfg.get_bool("data.synthetic", out.synthetic);
    out.synthetic_count =
        static_cast<int>(cfg.get_int("data.synthetic_count", out.synthetic_count));
    out.synthetic_size = static_cast<int>(cfg.get_int("data.synthetic_size", out.synthetic_size));
    return out;
}

io::Config train_config_to(const TrainConfig& cfg) {
    io::Config out;
    out.set_int("model.stages", cfg.model.stages);
    out.set_int("model.channels", cfg.model.channels);
    std::string rates = "[";
    for (size_t i = 0; i < cfg.model.dilation_rates.size(); ++i)
        rates += (i ? ", " : "") + std::to_string(cfg.model.dilation_rates[i]);
    out.set("model.dilation_rates", rates + "]");
    out.set_bool("model.use_cpm", cfg.model.use_cpm);
    out.set_bool("model.use_residual_branch", cfg.model.use_residual_branch);
    out.set_string("model.fdfm_mode",
                   cfg.model.fdfm_mode == net::FdfmMode::Frequency ? "frequency"
                                                                   : "transformer_sub");
    out.set_double("loss.lambda1", cfg.loss.lambda1);
    out.set_double("loss.lambda2", cfg.loss.lambda2);
    out.set_double("loss.eps", cfg.loss.eps);
    out.set_int("loss.ssim_window", cfg.loss.ssim_window);
    out.set_double("loss.ssim_sigma", cfg.loss.ssim_sigma);
    out.set_bool("loss.ssim_printed_form", cfg.loss.ssim_printed_form);
    const char* cm = cfg.loss.contrastive == loss::ContrastiveMode::AdaptiveFreq ? "adaptive_freq"
                     : cfg.loss.contrastive == loss::ContrastiveMode::PlainFreqL1
                         ? "plain_freq_l1"
                         : "spatial";
    out.set_string("loss.contrastive", cm);
    out.set_bool("loss.use_adaptive_weight", cfg.loss.use_adaptive_weight);
    out.set_bool("loss.use_ssim", cfg.loss.use_ssim);
    out.set_bool("loss.use_saliency", cfg.loss.use_saliency);
    out.set_double("train.lr0", cfg.lr0);
    out.set_int("train.lr_decay_every", cfg.lr_decay_every);
    out.set_double("train.lr_decay", cfg.lr_decay);
    out.set_int("train.batch", cfg.batch);
    out.set_int("train.crop", cfg.crop);
    out.set_int("train.epochs", cfg.epochs);
    out.set_int("train.max_steps", cfg.max_steps);
    out.set_int("train.seed", static_cast<int64_t>(cfg.seed));
    out.set_bool("train.aux_grad_to_backbone", cfg.aux_grad_to_backbone);
    out.set_int("train.threads", cfg.threads);
    if (!cfg.ir_dir.empty()) out.set_string("data.ir_dir", cfg.ir_dir);
    if (!cfg.vis_dir.empty()) out.set_string("data.vis_dir", cfg.vis_dir);
    out.set_bool("data.synthetic", cfg.synthetic);
    out.set_int("data.synthetic_count", cfg.synthetic_count);
    out.set_int("data.synthetic_size", cfg.synthetic_size);
    return out;
}

std::shared_ptr<Dataset> open_dataset(const TrainConfig& cfg) {
    if (cfg.synthetic)
        return std::make_shared<SyntheticDataset>(cfg.synthetic_count, cfg.synthetic_size,
                                                  cfg.synthetic_size, cfg.seed);
    return std::make_shared<FileDataset>(ingest(cfg.ir_dir, cfg.vis_dir));
}

// ----------------------------------------------------------------------- Adam

void Adam::ensure_state(const nn::ParamMap& params) {
    if (!state_.empty()) return;
    for (const auto& [name, v] : params.items)
        state_.emplace_back(name, std::make_pair(Tensor(v.value().shape()),
                                                 Tensor(v.value().shape())));
}

void Adam::step(nn::ParamMap& params) {
    ensure_state(params);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params.items.size(); ++pi) {
        Variable& p = params.items[pi].second;
        Tensor& m = state_[pi].second.first;
        Tensor& v = state_[pi].second.second;
        const Tensor& g = p.grad_mut();
        Tensor& value = p.value_mut();
        const double lr = lr_, b1 = beta1_, b2 = beta2_, eps = eps_;
        core::parallel_for(value.numel(), [&](int64_t i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        });
    }
}

void Adam::pack(net::Checkpoint& ckpt, const std::string& prefix) const {
    ckpt.meta[prefix + "t"] = t_;
    for (const auto& [name, mv] : state_) {
        ckpt.add(prefix + "m." + name, mv.first);
        ckpt.add(prefix + "v." + name, mv.second);
    }
}

void Adam::unpack(const net::Checkpoint& ckpt, const std::string& prefix) {
    t_ = ckpt.meta.value(prefix + "t", static_cast<int64_t>(0));
    for (auto& [name, mv] : state_) {
        const Tensor* m = ckpt.find(prefix + "m." + name);
        const Tensor* v = ckpt.find(prefix + "v." + name);
        if (!m || !v) throw std::runtime_error("checkpoint missing optimizer state for " + name);
        mv.first = *m;
        mv.second = *v;
    }
}

// -------------------------------------------------------------------- Trainer

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    if (cfg_.threads > 0) core::set_num_threads(cfg_.threads);
    dataset_ = open_dataset(cfg_);
    model_ = net::RpfNet(cfg_.model);
    model_.init(rng_);
    use_aux_ = cfg_.loss.use_saliency && cfg_.model.use_residual_branch;
    if (use_aux_) {
        decoder_ = net::AuxDecoder(cfg_.model.channels);
        decoder_.init(rng_);
    }
    opt_model_ = Adam(cfg_.lr0);
    opt_decoder_ = Adam(cfg_.lr0);
}

loss::LossBundle Trainer::run_step(const std::vector<SourcePair>& batch) {
    const int b = static_cast<int>(batch.size());
    const int h = batch[0].height(), w = batch[0].width();
    Tensor ir_batch({b, 1, h, w}), vis_batch({b, 1, h, w});
    std::vector<Tensor> ir_planes, vis_planes;
    for (int i = 0; i < b; ++i) {
        const SourcePair& p = batch[static_cast<size_t>(i)];
        std::copy(p.ir.data(), p.ir.data() + p.ir.numel(), &ir_batch.at(i, 0, 0, 0));
        std::copy(p.vis_y.data(), p.vis_y.data() + p.vis_y.numel(), &vis_batch.at(i, 0, 0, 0));
        ir_planes.push_back(p.ir);
        vis_planes.push_back(p.vis_y);
    }

    Variable ir_var = Variable::constant(std::move(ir_batch));
    Variable vis_var = Variable::constant(std::move(vis_batch));
    net::ForwardResult fwd = model_.forward(ir_var, vis_var, net::RunMode::Train);

    std::optional<Variable> m_prime;
    if (use_aux_) {
        Variable dec_in = cfg_.aux_grad_to_backbone ? fwd.final_residual
                                                    : nn::stop_gradient(fwd.final_residual);
        m_prime = decoder_.forward(dec_in, net::RunMode::Train);
    }

    loss::BatchLoss bl = loss::batch_loss(fwd.fused_y, m_prime, ir_planes, vis_planes, cfg_.loss);
    bl.total.backward();

    nn::ParamMap model_params = model_.parameters();
    opt_model_.step(model_params);
    for (auto& [name, v] : model_params.items) v.zero_grad();
    if (use_aux_) {
        nn::ParamMap dec_params;
        decoder_.collect_params(dec_params);
        opt_decoder_.step(dec_params);
        for (auto& [name, v] : dec_params.items) v.zero_grad();
    }
    return bl.bundle;
}

void Trainer::save_state(const std::string& path) {
    net::Checkpoint ckpt;
    ckpt.meta["model"] = net::model_config_to_json(cfg_.model);
    ckpt.meta["epoch"] = epoch_;
    ckpt.meta["global_step"] = global_step_;
    ckpt.meta["rng"] = rng_.save_state();
    ckpt.meta["has_decoder"] = use_aux_;
    net::pack_model(ckpt, model_);
    opt_model_.pack(ckpt, "adam_model.");
    if (use_aux_) {
        net::pack_decoder(ckpt, decoder_);
        opt_decoder_.pack(ckpt, "adam_decoder.");
    }
    net::save_checkpoint(path, ckpt);
}

void Trainer::resume(const std::string& checkpoint_path) {
    net::Checkpoint ckpt = net::load_checkpoint(checkpoint_path);
    net::unpack_model(ckpt, model_);
    nn::ParamMap model_params = model_.parameters();
    opt_model_.ensure_state(model_params);
    opt_model_.unpack(ckpt, "adam_model.");
    if (use_aux_ && ckpt.meta.value("has_decoder", false)) {
        net::unpack_decoder(ckpt, decoder_);
        nn::ParamMap dec_params;
        decoder_.collect_params(dec_params);
        opt_decoder_.ensure_state(dec_params);
        opt_decoder_.unpack(ckpt, "adam_decoder.");
    }
    epoch_ = ckpt.meta.value("epoch", 0);
    global_step_ = ckpt.meta.value("global_step", static_cast<int64_t>(0));
    rng_.load_state(ckpt.meta.value("rng", std::string()));
}

TrainResult Trainer::train(const std::string& out_dir) {
    fs::create_directories(out_dir);
    TrainResult result;
    const size_t n = dataset_->size();
    if (n == 0) throw std::runtime_error("empty dataset");
    const int steps_per_epoch = std::max<int>(1, static_cast<int>(n) / cfg_.batch);

    bool stop = false;
    while (epoch_ < cfg_.epochs && !stop && !result.aborted) {
        const double lr = lr_at_epoch(cfg_, epoch_);
        opt_model_.set_lr(lr);
        opt_decoder_.set_lr(lr);

        // shuffled visit order; with fewer samples than the batch size the
        // batch is filled by sampling with replacement
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (size_t i = n; i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(i) - 1))]);

        int steps_done = 0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<SourcePair> batch;
            for (int k = 0; k < cfg_.batch; ++k) {
                size_t idx;
                if (static_cast<size_t>(cfg_.batch) <= n)
                    idx = order[static_cast<size_t>(s) * cfg_.batch + k];
                else
                    idx = static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(n) - 1));
                SourcePair pair = dataset_->load(idx);
                batch.push_back(augment_crop(pair, cfg_.crop, rng_));
            }
            loss::LossBundle bundle;
            try {
                bundle = run_step(batch);
            } catch (const std::runtime_error& e) {
                // leave the last good checkpoint in place
                result.aborted = true;
                result.abort_reason = e.what();
                break;
            }
            result.history.push_back(std::move(bundle));
            ++global_step_;
            ++steps_done;
            if (cfg_.max_steps > 0 && global_step_ >= cfg_.max_steps) {
                stop = true;
                break;
            }
        }
        if (result.aborted) break;

        const bool epoch_completed = steps_done == steps_per_epoch;
        if (epoch_completed) ++epoch_;
        if (epoch_completed || stop) {
            const std::string last = (fs::path(out_dir) / "last.ckpt").string();
            if (epoch_completed) {
                char name[64];
                std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch_);
                save_state((fs::path(out_dir) / name).string());
            }
            save_state(last);
            result.last_checkpoint = last;
        }
    }
    write_loss_csv((fs::path(out_dir) / "loss_log.csv").string(), result.history);
    return result;
}

// --------------------------------------------------------------- validation

ValidationResult validate(net::RpfNet& model, const Dataset& data) {
    ValidationResult out;
    for (size_t i = 0; i < data.size(); ++i) {
        const SourcePair pair = data.load(i);
        net::FusedOutput fused = model.fuse(pair);
        out.per_image.push_back(metrics::evaluate(fused.fused_y, pair.ir, pair.vis_y));
    }
    const double inv = out.per_image.empty() ? 0.0 : 1.0 / static_cast<double>(out.per_image.size());
    for (const auto& r : out.per_image) {
        out.aggregate.en += r.en * inv;
        out.aggregate.sf += r.sf * inv;
        out.aggregate.sd += r.sd * inv;
        out.aggregate.cc += r.cc * inv;
        out.aggregate.scd += r.scd * inv;
        out.aggregate.vif += r.vif * inv;
    }
    return out;
}

SweepReport make_sweep_report(std::vector<std::string> labels,
                              std::vector<metrics::MetricReport> rows) {
    SweepReport rep;
    rep.labels = std::move(labels);
    rep.rows = std::move(rows);
    std::vector<std::vector<double>> table;
    for (const auto& r : rep.rows) table.push_back(r.as_row());
    rep.ror = metrics::ror_rank(table, true);
    return rep;
}

// ------------------------------------------------------------------ ablation

const std::vector<std::string>& ablation_case_names() {
    static const std::vector<std::string> names = {
        "no_ls", "lc_to_freq_l1", "spatial_lc", "no_lss",
        "no_w", "fdfm_to_transformer", "no_cpm", "no_res_prior"};
    return names;
}

void apply_ablation_case(TrainConfig& cfg, const std::string& name) {
    if (name == "no_ls") {
        cfg.loss.use_ssim = false;
    } else if (name == "lc_to_freq_l1") {
        cfg.loss.contrastive = loss::ContrastiveMode::PlainFreqL1;
    } else if (name == "spatial_lc") {
        cfg.loss.contrastive = loss::ContrastiveMode::Spatial;
    } else if (name == "no_lss") {
        cfg.loss.use_saliency = false;
    } else if (name == "no_w") {
        cfg.loss.use_adaptive_weight = false;
    } else if (name == "fdfm_to_transformer") {
        cfg.model.fdfm_mode = net::FdfmMode::TransformerSub;
    } else if (name == "no_cpm") {
        cfg.model.use_cpm = false;
    } else if (name == "no_res_prior") {
        cfg.model.use_residual_branch = false;
        cfg.loss.use_saliency = false;  // the auxiliary branch has no source
    } else {
        std::string valid;
        for (const auto& c : ablation_case_names()) valid += (valid.empty() ? "" : ", ") + c;
        throw std::invalid_argument("unknown ablation case '" + name + "'; valid cases: " + valid);
    }
}

void write_loss_csv(const std::string& path, const std::vector<loss::LossBundle>& history) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write loss log: " + path);
    os << "step,l_grad,l_reg,l_c,l_s,l_total\n";
    char buf[256];
    for (size_t i = 0; i < history.size(); ++i) {
        const auto& b = history[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1, b.l_grad,
                      b.l_reg, b.l_c, b.l_s, b.l_total);
        os << buf;
    }
}

}  // namespace rpf::train
