#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "snapnav/autodiff.hpp"
#include "snapnav/navsim.hpp"

namespace snapnav {

using ad::Mat;

enum class Variant { original, past_action_aware };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct PolicyDims {
    int vocab_size = 64;
    int max_instruction_length = 40;
    int d_emb = 32;
    int d_model = 32;
    int d_view = 16;
    int d_ff = 64;
    int self_layers = 2;
    int cross_layers = 2;

    void validate() const;
    bool operator==(const PolicyDims&) const = default;
};

struct AttentionBlock {
    Mat wq, wk, wv, wo;
    Mat ln_gain, ln_bias;
};

struct FeedForwardBlock {
    Mat w1, b1, w2, b2;
    Mat ln_gain, ln_bias;
};

struct SelfAttentionLayer {
    AttentionBlock attn;
    FeedForwardBlock ffn;
};

struct CrossSelfLayer {
    AttentionBlock cross;
    AttentionBlock self;
    FeedForwardBlock ffn;
};

// Gated recurrence producing the next cls from [post-attention cls, taken action feature].
struct MatchingBlock {
    Mat w_gate, b_gate;
    Mat w_update, b_update;
};

struct NamedBlock {
    std::string name;
    Mat* value;
};

struct ConstNamedBlock {
    std::string name;
    const Mat* value;
};

/// Parameters of the recurrent cross-modal attention policy. Both variants
/// share this schema; the variant only changes the forward wiring and loss.
struct PolicyParams {
    Variant variant = Variant::original;
    PolicyDims dims;

    Mat token_embedding;       // vocab_size x d_emb
    Mat positional_embedding;  // (max_instruction_length + 2) x d_emb
    Mat w_instruction;         // d_emb x d_model
    Mat w_candidate;           // d_view x d_model
    std::vector<SelfAttentionLayer> self_layers;
    std::vector<CrossSelfLayer> cross_layers;
    MatchingBlock matching;
    Mat critic_weight;  // d_model x 1
    Mat critic_bias;    // 1 x 1

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights, unit
    /// layer-norm gains, zero biases.
    static PolicyParams initialize(const PolicyDims& dims, Variant variant, std::uint64_t seed);

    /// Every block, in the fixed order used by the snapshot payload.
    std::vector<NamedBlock> blocks();
    std::vector<ConstNamedBlock> blocks() const;
    std::size_t parameter_count() const;

    /// Same shape, all zeros. Used as a gradient accumulator.
    PolicyParams zeros_like() const;
    /// Throws snapnav::Error naming the first block with a NaN/Inf entry.
    void check_finite(const std::string& what = "parameter") const;
    /// Rounds every entry to the nearest 32-bit float.
    void round_to_float();
};

/// Recurrent state of one rollout. Node handles refer to the tape owned by
/// the PolicyGraph that produced the state.
struct PolicyState {
    ad::Var instruction;  // (L + 2) x d_model: [cls, w_1..w_L, sep]
    ad::Var cls;          // 1 x d_model
    std::vector<ad::Var> cls_history;
    int t = 1;
    int instruction_length = 0;
    // Keys and values of [w_1..w_L, sep] for each cross layer, computed once.
    std::vector<ad::Var> word_keys;
    std::vector<ad::Var> word_values;
};

struct ActionScores {
    std::vector<double> scores;  // one per candidate, stop last
    Mat attention_rows;          // (1 + |history|) x L, oldest history row first, current cls last
    ad::Var score_node;
    ad::Var attention_node;
    ad::Var cls_out;     // post-attention cls
    ad::Var candidates;  // projected candidate features, (n + 1) x d_model
};

/// Binds a parameter set to a tape and runs the policy on it.
class PolicyGraph {
   public:
    /// When grad_sink is given (and the tape tracks gradients), backward()
    /// on the tape accumulates parameter gradients into it.
    PolicyGraph(const PolicyParams& params, ad::Tape& tape, PolicyParams* grad_sink = nullptr);

    const PolicyParams& params() const { return *params_; }
    ad::Tape& tape() { return *tape_; }

    PolicyState encode_instruction(std::span<const TokenId> instruction);
    ActionScores predict(const PolicyState& state, const Observation& obs);
    PolicyState update_state(const PolicyState& state, const ActionScores& scores, std::size_t taken_action);
    /// Critic estimate from the post-attention cls (1x1 node).
    ad::Var state_value(const ActionScores& scores);

   private:
    struct AttentionVars {
        ad::Var wq, wk, wv, wo, ln_gain, ln_bias;
    };
    struct FeedForwardVars {
        ad::Var w1, b1, w2, b2, ln_gain, ln_bias;
    };
    struct CrossVars {
        AttentionVars cross, self;
        FeedForwardVars ffn;
    };

    AttentionVars bind(const AttentionBlock& b, AttentionBlock* sink);
    FeedForwardVars bind(const FeedForwardBlock& b, FeedForwardBlock* sink);
    ad::Var feed_forward(const FeedForwardVars& f, ad::Var x);

    const PolicyParams* params_;
    ad::Tape* tape_;
    double inv_sqrt_d_;
    ad::Var token_embedding_, positional_embedding_, w_instruction_, w_candidate_;
    std::vector<std::pair<AttentionVars, FeedForwardVars>> self_layers_;
    std::vector<CrossVars> cross_layers_;
    ad::Var w_gate_, b_gate_, w_update_, b_update_;
    ad::Var critic_weight_, critic_bias_;
};

}  // namespace snapnav
