#include "gridner/model.hpp"

#include <algorithm>
#include <cmath>

namespace gridner {

void ModelConfig::validate() const {
    if (!external_vectors && vocab_size <= 0)
        throw validation_error("vocab_size must be positive");
    if (embed_dim <= 0 || lstm_hidden <= 0 || num_labels <= 0)
        throw validation_error("model dimensions must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw validation_error("dropout_rate must lie in [0,1)");
    if (query_width() <= 0 || query_width() > d())
        throw validation_error("d_prime must lie in (0, d]");
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    if (embeddings.defined()) out.emplace_back("embeddings", &embeddings);
    out.insert(out.end(), {
        {"lstm_fw_wx", &lstm_fw_wx}, {"lstm_fw_wh", &lstm_fw_wh}, {"lstm_fw_b", &lstm_fw_b},
        {"lstm_bw_wx", &lstm_bw_wx}, {"lstm_bw_wh", &lstm_bw_wh}, {"lstm_bw_b", &lstm_bw_b},
        {"head_w1", &head_w1}, {"head_b1", &head_b1}, {"head_w2", &head_w2}, {"head_b2", &head_b2},
        {"tail_w1", &tail_w1}, {"tail_b1", &tail_b1}, {"tail_w2", &tail_w2}, {"tail_b2", &tail_b2},
        {"biaffine_u1", &biaffine_u1}, {"biaffine_u2", &biaffine_u2}, {"biaffine_b", &biaffine_b},
        {"reg_upper_w", &reg_upper_w}, {"reg_upper_b", &reg_upper_b},
        {"reg_lower_w", &reg_lower_w}, {"reg_lower_b", &reg_lower_b},
        {"inter_w1", &inter_w1}, {"inter_b1", &inter_b1},
        {"inter_w2", &inter_w2}, {"inter_b2", &inter_b2},
        {"cc_query_w", &cc_query_w}, {"cc_query_b", &cc_query_b},
        {"cc_key_w", &cc_key_w}, {"cc_key_b", &cc_key_b},
        {"cc_value_w", &cc_value_w}, {"cc_value_b", &cc_value_b},
        {"classifier_w", &classifier_w}, {"classifier_b", &classifier_b},
    });
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    auto mutable_named = const_cast<ModelParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_named.size());
    for (auto& [name, t] : mutable_named) out.emplace_back(name, t);
    return out;
}

namespace {

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = (2.0 * uniform01(rng) - 1.0) * limit;
    return Tensor::from(std::move(shape), std::move(data), true);
}

Tensor uniform_init(Shape shape, double limit, std::mt19937_64& rng) {
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = (2.0 * uniform01(rng) - 1.0) * limit;
    return Tensor::from(std::move(shape), std::move(data), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

// Gate order i, f, g, o; forget-gate bias starts at one.
Tensor lstm_bias(std::size_t hidden) {
    std::vector<double> b(4 * hidden, 0.0);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    return Tensor::from({4 * hidden}, std::move(b), true);
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    const std::size_t e = std::size_t(config.embed_dim);
    const std::size_t h = std::size_t(config.lstm_hidden);
    const std::size_t d = std::size_t(config.d());
    const std::size_t dp = std::size_t(config.query_width());
    const std::size_t c = std::size_t(config.num_labels);

    ModelParams p;
    if (!config.external_vectors)
        p.embeddings = uniform_init({std::size_t(config.vocab_size), e}, 0.1, rng);

    p.lstm_fw_wx = glorot({e, 4 * h}, e, 4 * h, rng);
    p.lstm_fw_wh = glorot({h, 4 * h}, h, 4 * h, rng);
    p.lstm_fw_b = lstm_bias(h);
    p.lstm_bw_wx = glorot({e, 4 * h}, e, 4 * h, rng);
    p.lstm_bw_wh = glorot({h, 4 * h}, h, 4 * h, rng);
    p.lstm_bw_b = lstm_bias(h);

    p.head_w1 = glorot({d, d}, d, d, rng);
    p.head_b1 = zeros_param({d});
    p.head_w2 = glorot({d, d}, d, d, rng);
    p.head_b2 = zeros_param({d});
    p.tail_w1 = glorot({d, d}, d, d, rng);
    p.tail_b1 = zeros_param({d});
    p.tail_w2 = glorot({d, d}, d, d, rng);
    p.tail_b2 = zeros_param({d});

    p.biaffine_u1 = glorot({d, d, d}, d * d, d, rng);
    p.biaffine_u2 = glorot({2 * d, d}, 2 * d, d, rng);
    p.biaffine_b = zeros_param({d});

    p.reg_upper_w = glorot({d, 1}, d, 1, rng);
    p.reg_upper_b = zeros_param({1});
    p.reg_lower_w = glorot({d, 1}, d, 1, rng);
    p.reg_lower_b = zeros_param({1});

    p.inter_w1 = glorot({2 * d, d}, 2 * d, d, rng);
    p.inter_b1 = zeros_param({d});
    p.inter_w2 = glorot({d, d}, d, d, rng);
    p.inter_b2 = zeros_param({d});

    p.cc_query_w = glorot({d, dp}, d, dp, rng);
    p.cc_query_b = zeros_param({dp});
    p.cc_key_w = glorot({d, dp}, d, dp, rng);
    p.cc_key_b = zeros_param({dp});
    p.cc_value_w = glorot({d, d}, d, d, rng);
    p.cc_value_b = zeros_param({d});

    p.classifier_w = glorot({d, c}, d, c, rng);
    p.classifier_b = zeros_param({c});
    return p;
}

ModelParams clone_params(const ModelParams& params) {
    ModelParams out = params;  // shares nodes until each tensor is replaced
    for (auto& [name, t] : out.named())
        *t = Tensor::from(t->shape(), t->value(), true);
    return out;
}

Vocabulary Vocabulary::build(const std::vector<AnnotatedExample>& corpus) {
    std::set<std::string> distinct;
    for (const auto& ex : corpus)
        distinct.insert(ex.sentence.tokens.begin(), ex.sentence.tokens.end());
    Vocabulary v;
    v.tokens_.assign(1, "<unk>");
    v.tokens_.insert(v.tokens_.end(), distinct.begin(), distinct.end());
    for (int i = 0; i < v.size(); ++i) v.index_[v.tokens_[std::size_t(i)]] = i;
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.empty() || tokens.front() != "<unk>")
        throw validation_error("vocabulary must start with <unk>");
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    for (int i = 0; i < v.size(); ++i) v.index_[v.tokens_[std::size_t(i)]] = i;
    return v;
}

std::vector<int> Vocabulary::encode(const Sentence& sentence) const {
    std::vector<int> ids;
    ids.reserve(sentence.tokens.size());
    for (const auto& tok : sentence.tokens) {
        auto it = index_.find(tok);
        ids.push_back(it == index_.end() ? kUnk : it->second);
    }
    return ids;
}

int stage_width(GridStage stage, const ModelConfig& config) {
    switch (stage) {
        case GridStage::concat: return 2 * config.d();
        default: return config.d();
    }
}

void check_feature_grid(const FeatureGrid& grid, const ModelConfig& config) {
    const auto& s = grid.values.shape();
    if (s.size() != 3 || s[0] != s[1] || int(s[2]) != stage_width(grid.stage, config))
        throw shape_error("feature grid shape " + shape_text(s) +
                          " does not match its stage width " +
                          std::to_string(stage_width(grid.stage, config)));
}

namespace {

// One LSTM direction over the rows of x, visiting `steps` in order.
std::vector<Tensor> lstm_pass(const Tensor& x, const std::vector<std::size_t>& steps,
                              const Tensor& wx, const Tensor& wh, const Tensor& b,
                              std::size_t hidden) {
    std::vector<Tensor> hs(steps.size());
    Tensor h_prev = Tensor::zeros({hidden});
    Tensor c_prev = Tensor::zeros({hidden});
    for (std::size_t t : steps) {
        Tensor z = add(affine(row(x, t), wx, b), matmul(h_prev, wh));
        Tensor gate_i = sigmoid(slice_last(z, 0, hidden));
        Tensor gate_f = sigmoid(slice_last(z, hidden, hidden));
        Tensor gate_g = tanh(slice_last(z, 2 * hidden, hidden));
        Tensor gate_o = sigmoid(slice_last(z, 3 * hidden, hidden));
        Tensor c = add(mul(gate_f, c_prev), mul(gate_i, gate_g));
        Tensor h = mul(gate_o, tanh(c));
        hs[t] = h;
        h_prev = h;
        c_prev = c;
    }
    return hs;
}

Tensor bilstm(const Tensor& x, const ModelParams& params, const ModelConfig& config,
              RunMode mode, std::mt19937_64* rng) {
    const std::size_t n = x.shape()[0];
    const std::size_t hidden = std::size_t(config.lstm_hidden);
    std::vector<std::size_t> forward_steps(n), backward_steps(n);
    for (std::size_t t = 0; t < n; ++t) {
        forward_steps[t] = t;
        backward_steps[t] = n - 1 - t;
    }
    auto hf = lstm_pass(x, forward_steps, params.lstm_fw_wx, params.lstm_fw_wh,
                        params.lstm_fw_b, hidden);
    auto hb = lstm_pass(x, backward_steps, params.lstm_bw_wx, params.lstm_bw_wh,
                        params.lstm_bw_b, hidden);
    Tensor h = concat_last(stack_rows(hf), stack_rows(hb));
    if (mode == RunMode::train && config.dropout_rate > 0.0) {
        if (!rng) throw numeric_error("train mode needs an RNG stream for dropout");
        h = dropout(h, config.dropout_rate, *rng, true);
    }
    return h;
}

Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2) {
    return affine(tanh(affine(x, w1, b1)), w2, b2);
}

}  // namespace

Tensor encode_tokens(const std::vector<int>& token_ids, const ModelParams& params,
                     const ModelConfig& config, RunMode mode, std::mt19937_64* rng) {
    if (token_ids.empty()) throw validation_error("cannot encode an empty sentence");
    if (config.external_vectors)
        throw validation_error("model expects external token vectors, not token ids");
    Tensor x = embedding_rows(params.embeddings, token_ids);
    return bilstm(x, params, config, mode, rng);
}

Tensor encode_tokens(const Tensor& token_vectors, const ModelParams& params,
                     const ModelConfig& config, RunMode mode, std::mt19937_64* rng) {
    if (token_vectors.rank() != 2 || token_vectors.shape()[0] == 0)
        throw validation_error("token vectors must be a non-empty [n,e] matrix");
    if (int(token_vectors.shape()[1]) != config.embed_dim)
        throw shape_error("token vector width " + std::to_string(token_vectors.shape()[1]) +
                          " does not match embed_dim " + std::to_string(config.embed_dim));
    return bilstm(token_vectors, params, config, mode, rng);
}

IntraSpanTrace intra_span_features(const Tensor& h, const ModelParams& params,
                                   const ModelConfig& config) {
    const std::size_t n = h.shape()[0];
    IntraSpanTrace out;
    Tensor head = mlp(h, params.head_w1, params.head_b1, params.head_w2, params.head_b2);
    Tensor tail = mlp(h, params.tail_w1, params.tail_b1, params.tail_w2, params.tail_b2);
    Tensor boundary = bilinear_pairs(head, params.biaffine_u1, tail);
    Tensor pairwise = affine(pair_concat(head, tail), params.biaffine_u2, params.biaffine_b);
    out.span = add(boundary, pairwise);

    out.scores_upper = reshape(affine(h, params.reg_upper_w, params.reg_upper_b), {n});
    out.scores_lower = reshape(affine(h, params.reg_lower_w, params.reg_lower_b), {n});
    out.reg = linear_attention_grid(h, out.scores_upper, out.scores_lower);

    out.g = {concat_last(out.span, out.reg), GridStage::concat};
    check_feature_grid(out.g, config);
    return out;
}

InterSpanTrace inter_span_enhance(const FeatureGrid& g, const ModelParams& params,
                                  const ModelConfig& config, RunMode mode,
                                  std::mt19937_64* rng) {
    if (g.stage != GridStage::concat)
        throw shape_error("inter_span_enhance expects the concatenated feature grid");
    check_feature_grid(g, config);
    InterSpanTrace out;
    out.m = mlp(g.values, params.inter_w1, params.inter_b1, params.inter_w2, params.inter_b2);
    if (mode == RunMode::train && config.dropout_rate > 0.0) {
        if (!rng) throw numeric_error("train mode needs an RNG stream for dropout");
        out.m = dropout(out.m, config.dropout_rate, *rng, true);
    }
    // The paper's 1x1 convolutions: the same affine map at every cell.
    out.q = affine(out.m, params.cc_query_w, params.cc_query_b);
    out.k = affine(out.m, params.cc_key_w, params.cc_key_b);
    out.v = affine(out.m, params.cc_value_w, params.cc_value_b);
    out.attended = criss_cross_attention(out.q, out.k, out.v);
    out.enhanced = {add(out.attended, out.m), GridStage::enhanced};
    check_feature_grid(out.enhanced, config);
    return out;
}

GridClassification classify_grid(const FeatureGrid& enhanced, const ModelParams& params) {
    if (enhanced.stage != GridStage::enhanced)
        throw shape_error("classify_grid expects the relation-enhanced grid");
    GridClassification out;
    out.logits = affine(enhanced.values, params.classifier_w, params.classifier_b);
    out.probs = softmax(out.logits, out.logits.rank() - 1);
    return out;
}

namespace {

ForwardTrace finish_forward(Tensor h, const ModelParams& params, const ModelConfig& config,
                            RunMode mode, std::mt19937_64* rng) {
    ForwardTrace trace;
    trace.h = std::move(h);
    IntraSpanTrace intra = intra_span_features(trace.h, params, config);
    trace.scores_upper = intra.scores_upper;
    trace.scores_lower = intra.scores_lower;
    trace.span = intra.span;
    trace.reg = intra.reg;
    trace.g = intra.g;
    InterSpanTrace inter = inter_span_enhance(trace.g, params, config, mode, rng);
    trace.m = inter.m;
    trace.q = inter.q;
    trace.k = inter.k;
    trace.v = inter.v;
    trace.attended = inter.attended;
    trace.enhanced = inter.enhanced;
    GridClassification cls = classify_grid(trace.enhanced, params);
    trace.logits = cls.logits;
    trace.probs = cls.probs;
    return trace;
}

}  // namespace

ForwardTrace run_model(const std::vector<int>& token_ids, const ModelParams& params,
                       const ModelConfig& config, RunMode mode, std::mt19937_64* rng) {
    return finish_forward(encode_tokens(token_ids, params, config, mode, rng), params, config,
                          mode, rng);
}

ForwardTrace run_model(const Tensor& token_vectors, const ModelParams& params,
                       const ModelConfig& config, RunMode mode, std::mt19937_64* rng) {
    return finish_forward(encode_tokens(token_vectors, params, config, mode, rng), params,
                          config, mode, rng);
}

GridLabelMatrix predict_grid(const Tensor& probs, const LabelSet& labels) {
    if (probs.rank() != 3 || probs.shape()[0] != probs.shape()[1] ||
        int(probs.shape()[2]) != labels.size())
        throw shape_error("predict_grid: probabilities shape " + shape_text(probs.shape()));
    const int n = int(probs.shape()[0]);
    const int c = labels.size();
    GridLabelMatrix grid(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double* cell = probs.value().data() + (std::size_t(i) * n + j) * c;
            int best = LabelSet::kNone;
            double best_p = -1.0;
            for (int id = 0; id < c; ++id) {
                const bool allowed = i == j ||
                                     (i < j && !labels.is_entity_type(id)) ||
                                     (i > j && (id == LabelSet::kNone || labels.is_entity_type(id)));
                if (allowed && cell[id] > best_p) {
                    best = id;
                    best_p = cell[id];
                }
            }
            grid.at(i, j) = best;
        }
    }
    return grid;
}

}  // namespace gridner
