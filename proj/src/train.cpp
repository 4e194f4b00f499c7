#include "gridner/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gridner/decode.hpp"
#include "gridner/eval.hpp"

namespace gridner {

void TrainConfig::validate() const {
    if (epochs < 1) throw validation_error("epochs must be >= 1");
    if (batch_size < 1) throw validation_error("batch_size must be >= 1");
    if (learning_rate <= 0.0) throw validation_error("learning_rate must be positive");
    if (weight_decay < 0.0 || grad_clip < 0.0 || none_class_weight < 0.0)
        throw validation_error("negative optimizer setting");
}

Tensor nll_loss(const Tensor& probs, const GridLabelMatrix& gold, double none_class_weight) {
    const std::size_t n = std::size_t(gold.n);
    if (probs.rank() != 3 || probs.shape()[0] != n || probs.shape()[1] != n)
        throw shape_error("nll_loss: probabilities " + shape_text(probs.shape()) +
                          " vs grid of size " + std::to_string(gold.n));
    std::vector<double> weights;
    if (none_class_weight != 1.0) {
        weights.resize(gold.cells.size(), 1.0);
        for (std::size_t i = 0; i < gold.cells.size(); ++i)
            if (gold.cells[i] == LabelSet::kNone) weights[i] = none_class_weight;
    }
    return nll_from_probs(probs, gold.cells, weights);
}

AdamW::AdamW(double learning_rate, double weight_decay, double beta1, double beta2,
             double epsilon)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void AdamW::step(std::vector<std::pair<std::string, Tensor*>> params, double scale,
                 double grad_clip) {
    const double inv_scale = 1.0 / scale;
    double clip_factor = 1.0;
    if (grad_clip > 0.0) {
        double norm_sq = 0.0;
        for (auto& [name, t] : params)
            for (double g : t->grad()) norm_sq += (g * inv_scale) * (g * inv_scale);
        const double norm = std::sqrt(norm_sq);
        if (norm > grad_clip) clip_factor = grad_clip / norm;
    }
    ++t_;
    const double bias1 = 1.0 - std::pow(beta1_, double(t_));
    const double bias2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& [name, t] : params) {
        auto& [m, v] = moments_[name];
        if (m.empty()) {
            m.assign(t->size(), 0.0);
            v.assign(t->size(), 0.0);
        }
        auto& value = t->mutable_value();
        const auto& grad = t->grad();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i] * inv_scale * clip_factor;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            value[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + wd_ * value[i]);
            if (!std::isfinite(value[i]))
                throw numeric_error("parameter " + name + " became non-finite");
        }
        t->zero_grad();
    }
}

namespace {

std::string example_name(const AnnotatedExample& ex, std::size_t index) {
    return ex.sentence.id.empty() ? "#" + std::to_string(index) : ex.sentence.id;
}

Tensor vectors_tensor(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    const std::size_t e = rows.empty() ? 0 : rows.front().size();
    std::vector<double> flat;
    flat.reserve(n * e);
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::from({n, e}, std::move(flat));
}

ForwardTrace forward_example(const TrainData& data, std::size_t index, bool dev_split,
                             const Vocabulary& vocab, const ModelParams& params,
                             const ModelConfig& config, RunMode mode, std::mt19937_64* rng) {
    const auto& examples = dev_split ? data.dev : data.corpus;
    const auto& vectors = dev_split ? data.dev_vectors : data.corpus_vectors;
    if (config.external_vectors)
        return run_model(vectors_tensor(vectors[index]), params, config, mode, rng);
    return run_model(vocab.encode(examples[index].sentence), params, config, mode, rng);
}

// Fisher-Yates with explicit draws so the order depends only on the seed.
void shuffle_indices(std::vector<std::size_t>& order, std::mt19937_64& rng) {
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);
}

}  // namespace

TrainOutcome train_model(const TrainData& data, ModelConfig model_config,
                         const TrainConfig& train_config,
                         const std::filesystem::path& checkpoint_path,
                         std::ostream* metrics) {
    train_config.validate();
    if (data.corpus.empty()) throw validation_error("training corpus is empty");
    if (model_config.external_vectors) {
        if (data.corpus_vectors.size() != data.corpus.size() ||
            data.dev_vectors.size() != data.dev.size())
            throw validation_error("external vectors are not aligned with the corpus");
        if (!data.corpus_vectors.front().empty())
            model_config.embed_dim = int(data.corpus_vectors.front().front().size());
    }

    // Labels and vocabulary come from the training split only.
    const LabelSet labels = derive_label_set(data.corpus);
    Vocabulary vocab;
    if (!model_config.external_vectors) {
        vocab = Vocabulary::build(data.corpus);
        model_config.vocab_size = vocab.size();
    }
    model_config.num_labels = labels.size();
    model_config.validate();

    // Gold grids once up front; unresolvable conflicts abort here.
    std::vector<GridLabelMatrix> gold_grids;
    gold_grids.reserve(data.corpus.size());
    for (std::size_t i = 0; i < data.corpus.size(); ++i) {
        try {
            gold_grids.push_back(encode_grid(data.corpus[i], labels).grid);
        } catch (const validation_error& err) {
            throw validation_error("example " + example_name(data.corpus[i], i) + ": " +
                                   err.what());
        }
    }

    std::mt19937_64 init_rng(train_config.seed);
    std::mt19937_64 shuffle_rng(train_config.seed ^ 0x9e3779b97f4a7c15ull);
    std::mt19937_64 dropout_rng(train_config.seed ^ 0x6a09e667f3bcc908ull);

    ModelParams params = init_params(model_config, init_rng);
    AdamW optimizer(train_config.learning_rate, train_config.weight_decay);

    TrainOutcome outcome;
    outcome.report.checkpoint_path = checkpoint_path.string();

    std::vector<std::size_t> order(data.corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        int pending = 0;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const std::size_t idx = order[pos];
            ForwardTrace trace = forward_example(data, idx, false, vocab, params, model_config,
                                                 RunMode::train, &dropout_rng);
            Tensor loss =
                nll_loss(trace.probs, gold_grids[idx], train_config.none_class_weight);
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value))
                throw numeric_error("non-finite loss on example " +
                                    example_name(data.corpus[idx], idx));
            loss_sum += loss_value;
            backward(loss);
            if (++pending == train_config.batch_size || pos + 1 == order.size()) {
                optimizer.step(params.named(), double(pending), train_config.grad_clip);
                pending = 0;
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / double(data.corpus.size());

        if (!data.dev.empty()) {
            NoGradGuard no_grad;
            std::vector<AnnotatedExample> predictions;
            predictions.reserve(data.dev.size());
            for (std::size_t i = 0; i < data.dev.size(); ++i) {
                ForwardTrace trace = forward_example(data, i, true, vocab, params,
                                                     model_config, RunMode::eval, nullptr);
                AnnotatedExample pred;
                pred.sentence = data.dev[i].sentence;
                try {
                    pred.entities = decode_entities(predict_grid(trace.probs, labels), labels);
                } catch (const decode_error&) {
                    // A pathological grid counts as an empty prediction; the
                    // failure is reported in the epoch stats rather than
                    // aborting the run.
                    ++stats.dev_decode_failures;
                }
                predictions.push_back(std::move(pred));
            }
            EvalResult dev = span_f1(predictions, data.dev);
            stats.dev_precision = dev.precision;
            stats.dev_recall = dev.recall;
            stats.dev_f1 = dev.f1;
        }

        outcome.report.epochs.push_back(stats);
        if (metrics) {
            (*metrics) << "epoch=" << stats.epoch << "\tmean_loss=" << stats.mean_loss
                       << "\tdev_p=" << stats.dev_precision << "\tdev_r=" << stats.dev_recall
                       << "\tdev_f1=" << stats.dev_f1
                       << "\tdev_decode_failures=" << stats.dev_decode_failures << "\n";
        }

        const bool improved = outcome.report.best_epoch == 0 ||
                              stats.dev_f1 > outcome.report.best_dev_f1;
        if (improved) {
            outcome.report.best_epoch = epoch;
            outcome.report.best_dev_f1 = stats.dev_f1;
            outcome.best = Checkpoint{model_config, labels, vocab, clone_params(params)};
            if (!checkpoint_path.empty()) save_checkpoint(outcome.best, checkpoint_path);
        }
    }
    return outcome;
}

namespace {

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw validation_error("expected a boolean, got: " + v);
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open config file: " + path.string());
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw parse_error(path.string(), line_no, "expected \"key = value\"");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw parse_error(path.string(), line_no, "expected \"key = value\"");
        try {
            if (key == "embed_dim") cfg.model.embed_dim = std::stoi(value);
            else if (key == "lstm_hidden") cfg.model.lstm_hidden = std::stoi(value);
            else if (key == "d_prime") cfg.model.d_prime = std::stoi(value);
            else if (key == "dropout") cfg.model.dropout_rate = std::stod(value);
            else if (key == "external_vectors") cfg.model.external_vectors = parse_bool(value);
            else if (key == "epochs") cfg.train.epochs = std::stoi(value);
            else if (key == "batch_size") cfg.train.batch_size = std::stoi(value);
            else if (key == "learning_rate") cfg.train.learning_rate = std::stod(value);
            else if (key == "seed") cfg.train.seed = std::stoull(value);
            else if (key == "weight_decay") cfg.train.weight_decay = std::stod(value);
            else if (key == "grad_clip") cfg.train.grad_clip = std::stod(value);
            else if (key == "none_class_weight") cfg.train.none_class_weight = std::stod(value);
            else throw validation_error("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw parse_error(path.string(), line_no, "bad value for " + key + ": " + value);
        } catch (const std::out_of_range&) {
            throw parse_error(path.string(), line_no, "bad value for " + key + ": " + value);
        } catch (const validation_error& err) {
            throw parse_error(path.string(), line_no, err.what());
        }
    }
    return cfg;
}

}  // namespace gridner
