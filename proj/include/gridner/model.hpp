#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gridner/corpus.hpp"
#include "gridner/grid.hpp"
#include "gridner/tensor.hpp"

namespace gridner {

struct ModelConfig {
    int vocab_size = 0;      // ignored when external_vectors is set
    int embed_dim = 32;      // token input width (external vector width when external)
    int lstm_hidden = 16;    // per direction; token representation d = 2*lstm_hidden
    int d_prime = 0;         // criss-cross query/key width; 0 means d/2
    int num_labels = 0;      // |C|
    double dropout_rate = 0.5;
    bool external_vectors = false;

    int d() const { return 2 * lstm_hidden; }
    int query_width() const { return d_prime > 0 ? d_prime : d() / 2; }
    void validate() const;
};

// All learnable parameter groups. `named()` yields a stable name -> tensor
// order used by the optimizer and the checkpoint format.
struct ModelParams {
    Tensor embeddings;  // [V, e]; undefined when external vectors are used

    Tensor lstm_fw_wx, lstm_fw_wh, lstm_fw_b;  // [e,4h],[h,4h],[4h]
    Tensor lstm_bw_wx, lstm_bw_wh, lstm_bw_b;

    Tensor head_w1, head_b1, head_w2, head_b2;  // d -> d -> d, tanh hidden
    Tensor tail_w1, tail_b1, tail_w2, tail_b2;

    Tensor biaffine_u1;  // [d,d,d]
    Tensor biaffine_u2;  // [2d,d]
    Tensor biaffine_b;   // [d]

    Tensor reg_upper_w, reg_upper_b;  // [d,1],[1]
    Tensor reg_lower_w, reg_lower_b;

    Tensor inter_w1, inter_b1, inter_w2, inter_b2;  // 2d -> d -> d, tanh hidden

    Tensor cc_query_w, cc_query_b;  // [d,d'],[d']
    Tensor cc_key_w, cc_key_b;      // [d,d'],[d']
    Tensor cc_value_w, cc_value_b;  // [d,d],[d]

    Tensor classifier_w, classifier_b;  // [d,|C|],[|C|]

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng);

// Deep copy: the clone's tensors share nothing with the source.
ModelParams clone_params(const ModelParams& params);

// Token -> id map: id 0 is the unknown token, the rest are the sorted distinct
// training tokens.
class Vocabulary {
public:
    static constexpr int kUnk = 0;
    Vocabulary() = default;
    static Vocabulary build(const std::vector<AnnotatedExample>& corpus);
    static Vocabulary from_tokens(std::vector<std::string> tokens);  // checkpoint load

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::vector<int> encode(const Sentence& sentence) const;

private:
    std::vector<std::string> tokens_{"<unk>"};
    std::map<std::string, int> index_;
};

enum class RunMode { train, eval };

enum class GridStage { span, reg, concat, reduced, attended, enhanced };

struct FeatureGrid {
    Tensor values;  // [n, n, width]
    GridStage stage = GridStage::concat;
};

// Expected feature width of a stage under a config.
int stage_width(GridStage stage, const ModelConfig& config);
void check_feature_grid(const FeatureGrid& grid, const ModelConfig& config);

// Embedding lookup followed by forward and backward LSTM passes; the two
// directions concatenate per token. Dropout on the result in train mode.
Tensor encode_tokens(const std::vector<int>& token_ids, const ModelParams& params,
                     const ModelConfig& config, RunMode mode, std::mt19937_64* rng);
// Same contract with externally supplied per-token vectors instead of Eq.1's
// embedding lookup.
Tensor encode_tokens(const Tensor& token_vectors, const ModelParams& params,
                     const ModelConfig& config, RunMode mode, std::mt19937_64* rng);

// Every intermediate of one pass, kept for tests and attention dumps.
struct ForwardTrace {
    Tensor h;           // [n,d]
    Tensor scores_upper, scores_lower;  // [n] linear-attention scores
    Tensor span;        // [n,n,d]
    Tensor reg;         // [n,n,d]
    FeatureGrid g;      // concat [n,n,2d]
    Tensor m;           // reduced [n,n,d]
    Tensor q, k, v;     // criss-cross projections
    Tensor attended;    // [n,n,d]
    FeatureGrid enhanced;  // [n,n,d]
    Tensor logits;      // [n,n,|C|]
    Tensor probs;       // [n,n,|C|]
};

struct IntraSpanTrace {
    Tensor span, reg;
    Tensor scores_upper, scores_lower;
    FeatureGrid g;
};
IntraSpanTrace intra_span_features(const Tensor& h, const ModelParams& params,
                                   const ModelConfig& config);

struct InterSpanTrace {
    Tensor m, q, k, v, attended;
    FeatureGrid enhanced;
};
InterSpanTrace inter_span_enhance(const FeatureGrid& g, const ModelParams& params,
                                  const ModelConfig& config, RunMode mode,
                                  std::mt19937_64* rng);

struct GridClassification {
    Tensor logits;
    Tensor probs;
};
GridClassification classify_grid(const FeatureGrid& enhanced, const ModelParams& params);

ForwardTrace run_model(const std::vector<int>& token_ids, const ModelParams& params,
                       const ModelConfig& config, RunMode mode, std::mt19937_64* rng);
ForwardTrace run_model(const Tensor& token_vectors, const ModelParams& params,
                       const ModelConfig& config, RunMode mode, std::mt19937_64* rng);

// Argmax per cell restricted to the labels the triangle discipline allows,
// so the result is always a decodable grid.
GridLabelMatrix predict_grid(const Tensor& probs, const LabelSet& labels);

}  // namespace gridner
