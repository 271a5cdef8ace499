#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rpf/io/config.hpp"
#include "rpf/loss/losses.hpp"
#include "rpf/metrics/metrics.hpp"
#include "rpf/net/checkpoint.hpp"
#include "rpf/train/dataset.hpp"

namespace rpf::train {

struct TrainConfig {
    net::ModelConfig model;
    loss::LossConfig loss;

    double lr0 = 1e-3;
    int lr_decay_every = 20;  // epochs
    double lr_decay = 0.5;
    int batch = 16;
    int crop = 128;
    int epochs = 60;
    int max_steps = 0;  // 0 = whole schedule
    uint64_t seed = 0;
    bool aux_grad_to_backbone = true;

    std::string ir_dir, vis_dir;
    bool synthetic = false;
    int synthetic_count = 8;
    int synthetic_size = 64;

    int threads = 0;

    void validate() const;  // throws std::invalid_argument
};

/// lr(e) = lr0 * decay^floor(e / every), epochs counted from 0.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// TOML binding. Unknown or unexpected keys throw std::runtime_error naming
/// the key; bare aliases (epochs, lambda2, ...) map to their sections.
TrainConfig train_config_from(const io::Config& cfg);
io::Config train_config_to(const TrainConfig& cfg);
std::string canonical_config_key(const std::string& key);  // resolves aliases, throws on unknown

std::shared_ptr<Dataset> open_dataset(const TrainConfig& cfg);

class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    void ensure_state(const nn::ParamMap& params);
    void step(nn::ParamMap& params);
    void pack(net::Checkpoint& ckpt, const std::string& prefix) const;
    void unpack(const net::Checkpoint& ckpt, const std::string& prefix);

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::pair<std::string, std::pair<core::Tensor, core::Tensor>>> state_;
    friend struct AdamTestAccess;
};

struct TrainResult {
    std::vector<loss::LossBundle> history;  // one bundle per step
    std::string last_checkpoint;
    bool aborted = false;
    std::string abort_reason;
};

/// Two-optimizer training: optimizer A steps the fusion network on the total
/// gradient (fusion loss plus, by default, the saliency gradients reaching the
/// shared residual branch); optimizer B steps the auxiliary decoder on the
/// saliency structure loss.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    TrainResult train(const std::string& out_dir);
    void resume(const std::string& checkpoint_path);

    net::RpfNet& model() { return model_; }
    net::AuxDecoder& decoder() { return decoder_; }
    const TrainConfig& config() const { return cfg_; }

private:
    void save_state(const std::string& path);
    loss::LossBundle run_step(const std::vector<SourcePair>& batch);

    TrainConfig cfg_;
    std::shared_ptr<Dataset> dataset_;
    net::RpfNet model_;
    net::AuxDecoder decoder_;
    Adam opt_model_, opt_decoder_;
    core::Rng rng_;
    int epoch_ = 0;
    int64_t global_step_ = 0;
    bool use_aux_ = true;
};

struct ValidationResult {
    std::vector<metrics::MetricReport> per_image;
    metrics::MetricReport aggregate;  // arithmetic mean
};

ValidationResult validate(net::RpfNet& model, const Dataset& data);

/// A labeled metric table plus its rank-of-ranks column.
struct SweepReport {
    std::vector<std::string> labels;
    std::vector<metrics::MetricReport> rows;
    std::vector<double> ror;
};

SweepReport make_sweep_report(std::vector<std::string> labels,
                              std::vector<metrics::MetricReport> rows);

const std::vector<std::string>& ablation_case_names();
/// Mutates cfg for one named ablation case; throws std::invalid_argument
/// listing the valid names on an unknown case.
void apply_ablation_case(TrainConfig& cfg, const std::string& name);

/// Loss log CSV: header step,l_grad,l_reg,l_c,l_s,l_total with %.17g values.
void write_loss_csv(const std::string& path, const std::vector<loss::LossBundle>& history);

}  // namespace rpf::train
