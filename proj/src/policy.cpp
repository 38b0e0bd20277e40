#include "snapnav/policy.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "snapnav/common.hpp"

namespace snapnav {

using ad::Var;

std::string to_string(Variant v) { return v == Variant::original ? "original" : "past_action_aware"; }

Variant variant_from_string(const std::string& name) {
    if (name == "original") return Variant::original;
    if (name == "past_action_aware") return Variant::past_action_aware;
    throw Error("unknown variant '" + name + "'");
}

void PolicyDims::validate() const {
    if (vocab_size < 3 || max_instruction_length < 1 || d_emb < 1 || d_model < 1 || d_view < 1 || d_ff < 1 ||
        self_layers < 0 || cross_layers < 1)
        throw Error("invalid policy dimensions");
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Mat uniform(std::mt19937_64& rng, int rows, int cols, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

AttentionBlock init_attention(std::mt19937_64& rng, int d) {
    AttentionBlock b;
    b.wq = uniform(rng, d, d, d);
    b.wk = uniform(rng, d, d, d);
    b.wv = uniform(rng, d, d, d);
    b.wo = uniform(rng, d, d, d);
    b.ln_gain = Mat::Ones(1, d);
    b.ln_bias = Mat::Zero(1, d);
    return b;
}

FeedForwardBlock init_ffn(std::mt19937_64& rng, int d, int d_ff) {
    FeedForwardBlock f;
    f.w1 = uniform(rng, d, d_ff, d);
    f.b1 = Mat::Zero(1, d_ff);
    f.w2 = uniform(rng, d_ff, d, d_ff);
    f.b2 = Mat::Zero(1, d);
    f.ln_gain = Mat::Ones(1, d);
    f.ln_bias = Mat::Zero(1, d);
    return f;
}

void append(std::vector<NamedBlock>& out, const std::string& prefix, AttentionBlock& b) {
    out.push_back({prefix + ".wq", &b.wq});
    out.push_back({prefix + ".wk", &b.wk});
    out.push_back({prefix + ".wv", &b.wv});
    out.push_back({prefix + ".wo", &b.wo});
    out.push_back({prefix + ".ln_gain", &b.ln_gain});
    out.push_back({prefix + ".ln_bias", &b.ln_bias});
}

void append(std::vector<NamedBlock>& out, const std::string& prefix, FeedForwardBlock& f) {
    out.push_back({prefix + ".w1", &f.w1});
    out.push_back({prefix + ".b1", &f.b1});
    out.push_back({prefix + ".w2", &f.w2});
    out.push_back({prefix + ".b2", &f.b2});
    out.push_back({prefix + ".ln_gain", &f.ln_gain});
    out.push_back({prefix + ".ln_bias", &f.ln_bias});
}

}  // namespace

PolicyParams PolicyParams::initialize(const PolicyDims& dims, Variant variant, std::uint64_t seed) {
    dims.validate();
    std::mt19937_64 rng(seed);
    const int d = dims.d_model;
    PolicyParams p;
    p.variant = variant;
    p.dims = dims;
    p.token_embedding = uniform(rng, dims.vocab_size, dims.d_emb, dims.d_emb);
    p.positional_embedding = uniform(rng, dims.max_instruction_length + 2, dims.d_emb, dims.d_emb);
    p.w_instruction = uniform(rng, dims.d_emb, d, dims.d_emb);
    p.w_candidate = uniform(rng, dims.d_view, d, dims.d_view);
    for (int i = 0; i < dims.self_layers; ++i)
        p.self_layers.push_back({init_attention(rng, d), init_ffn(rng, d, dims.d_ff)});
    for (int i = 0; i < dims.cross_layers; ++i)
        p.cross_layers.push_back({init_attention(rng, d), init_attention(rng, d), init_ffn(rng, d, dims.d_ff)});
    p.matching.w_gate = uniform(rng, 2 * d, d, 2 * d);
    p.matching.b_gate = Mat::Zero(1, d);
    p.matching.w_update = uniform(rng, 2 * d, d, 2 * d);
    p.matching.b_update = Mat::Zero(1, d);
    p.critic_weight = uniform(rng, d, 1, d);
    p.critic_bias = Mat::Zero(1, 1);
    return p;
}

std::vector<NamedBlock> PolicyParams::blocks() {
    std::vector<NamedBlock> out{{"token_embedding", &token_embedding},
                                {"positional_embedding", &positional_embedding},
                                {"w_instruction", &w_instruction},
                                {"w_candidate", &w_candidate}};
    for (std::size_t i = 0; i < self_layers.size(); ++i) {
        const std::string prefix = "self." + std::to_string(i);
        append(out, prefix + ".attn", self_layers[i].attn);
        append(out, prefix + ".ffn", self_layers[i].ffn);
    }
    for (std::size_t i = 0; i < cross_layers.size(); ++i) {
        const std::string prefix = "cross." + std::to_string(i);
        append(out, prefix + ".cross", cross_layers[i].cross);
        append(out, prefix + ".self", cross_layers[i].self);
        append(out, prefix + ".ffn", cross_layers[i].ffn);
    }
    out.push_back({"matching.w_gate", &matching.w_gate});
    out.push_back({"matching.b_gate", &matching.b_gate});
    out.push_back({"matching.w_update", &matching.w_update});
    out.push_back({"matching.b_update", &matching.b_update});
    out.push_back({"critic.weight", &critic_weight});
    out.push_back({"critic.bias", &critic_bias});
    return out;
}

std::vector<ConstNamedBlock> PolicyParams::blocks() const {
    auto mutable_blocks = const_cast<PolicyParams*>(this)->blocks();
    std::vector<ConstNamedBlock> out;
    out.reserve(mutable_blocks.size());
    for (auto& b : mutable_blocks) out.push_back({std::move(b.name), b.value});
    return out;
}

std::size_t PolicyParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks()) n += static_cast<std::size_t>(b.value->size());
    return n;
}

PolicyParams PolicyParams::zeros_like() const {
    PolicyParams z = *this;
    for (auto& b : z.blocks()) b.value->setZero();
    return z;
}

void PolicyParams::check_finite(const std::string& what) const {
    for (const auto& b : blocks()) {
        if (!b.value->allFinite()) throw Error("non-finite " + what + " in block '" + b.name + "'");
    }
}

void PolicyParams::round_to_float() {
    for (auto& b : blocks()) {
        for (Eigen::Index i = 0; i < b.value->size(); ++i)
            b.value->data()[i] = static_cast<double>(static_cast<float>(b.value->data()[i]));
    }
}

// ---------------------------------------------------------------------------
// Forward graph

PolicyGraph::AttentionVars PolicyGraph::bind(const AttentionBlock& b, AttentionBlock* sink) {
    ad::Tape& t = *tape_;
    return {t.parameter(b.wq, sink ? &sink->wq : nullptr),           t.parameter(b.wk, sink ? &sink->wk : nullptr),
            t.parameter(b.wv, sink ? &sink->wv : nullptr),           t.parameter(b.wo, sink ? &sink->wo : nullptr),
            t.parameter(b.ln_gain, sink ? &sink->ln_gain : nullptr), t.parameter(b.ln_bias, sink ? &sink->ln_bias : nullptr)};
}

PolicyGraph::FeedForwardVars PolicyGraph::bind(const FeedForwardBlock& f, FeedForwardBlock* sink) {
    ad::Tape& t = *tape_;
    return {t.parameter(f.w1, sink ? &sink->w1 : nullptr),           t.parameter(f.b1, sink ? &sink->b1 : nullptr),
            t.parameter(f.w2, sink ? &sink->w2 : nullptr),           t.parameter(f.b2, sink ? &sink->b2 : nullptr),
            t.parameter(f.ln_gain, sink ? &sink->ln_gain : nullptr), t.parameter(f.ln_bias, sink ? &sink->ln_bias : nullptr)};
}

PolicyGraph::PolicyGraph(const PolicyParams& params, ad::Tape& tape, PolicyParams* grad_sink)
    : params_(&params), tape_(&tape), inv_sqrt_d_(1.0 / std::sqrt(static_cast<double>(params.dims.d_model))) {
    PolicyParams* s = grad_sink;
    ad::Tape& t = tape;
    token_embedding_ = t.parameter(params.token_embedding, s ? &s->token_embedding : nullptr);
    positional_embedding_ = t.parameter(params.positional_embedding, s ? &s->positional_embedding : nullptr);
    w_instruction_ = t.parameter(params.w_instruction, s ? &s->w_instruction : nullptr);
    w_candidate_ = t.parameter(params.w_candidate, s ? &s->w_candidate : nullptr);
    for (std::size_t i = 0; i < params.self_layers.size(); ++i) {
        auto* ls = s ? &s->self_layers[i] : nullptr;
        self_layers_.emplace_back(bind(params.self_layers[i].attn, ls ? &ls->attn : nullptr),
                                  bind(params.self_layers[i].ffn, ls ? &ls->ffn : nullptr));
    }
    for (std::size_t i = 0; i < params.cross_layers.size(); ++i) {
        auto* ls = s ? &s->cross_layers[i] : nullptr;
        cross_layers_.push_back({bind(params.cross_layers[i].cross, ls ? &ls->cross : nullptr),
                                 bind(params.cross_layers[i].self, ls ? &ls->self : nullptr),
                                 bind(params.cross_layers[i].ffn, ls ? &ls->ffn : nullptr)});
    }
    const auto& m = params.matching;
    w_gate_ = t.parameter(m.w_gate, s ? &s->matching.w_gate : nullptr);
    b_gate_ = t.parameter(m.b_gate, s ? &s->matching.b_gate : nullptr);
    w_update_ = t.parameter(m.w_update, s ? &s->matching.w_update : nullptr);
    b_update_ = t.parameter(m.b_update, s ? &s->matching.b_update : nullptr);
    critic_weight_ = t.parameter(params.critic_weight, s ? &s->critic_weight : nullptr);
    critic_bias_ = t.parameter(params.critic_bias, s ? &s->critic_bias : nullptr);
}

Var PolicyGraph::feed_forward(const FeedForwardVars& f, Var x) {
    ad::Tape& t = *tape_;
    Var hidden = t.tanh(t.add_row(t.matmul(x, f.w1), f.b1));
    Var out = t.add_row(t.matmul(hidden, f.w2), f.b2);
    return t.layer_norm_rows(t.add(x, out), f.ln_gain, f.ln_bias);
}

PolicyState PolicyGraph::encode_instruction(std::span<const TokenId> instruction) {
    const auto& dims = params_->dims;
    const int length = static_cast<int>(instruction.size());
    if (length > dims.max_instruction_length)
        throw Error("instruction of " + std::to_string(length) + " tokens exceeds the limit of " +
                    std::to_string(dims.max_instruction_length));
    std::vector<int> tokens;
    tokens.reserve(instruction.size() + 2);
    tokens.push_back(kClsToken);
    for (TokenId tok : instruction) {
        if (tok < 0 || tok >= dims.vocab_size) throw Error("unknown token id " + std::to_string(tok));
        tokens.push_back(tok);
    }
    tokens.push_back(kSepToken);
    std::vector<int> positions(tokens.size());
    std::iota(positions.begin(), positions.end(), 0);

    ad::Tape& t = *tape_;
    Var embedded = t.add(t.gather_rows(token_embedding_, tokens), t.gather_rows(positional_embedding_, positions));
    Var x = t.matmul(embedded, w_instruction_);
    for (const auto& [attn, ffn] : self_layers_) {
        Var q = t.matmul(x, attn.wq);
        Var k = t.matmul(x, attn.wk);
        Var v = t.matmul(x, attn.wv);
        Var weights = t.softmax_rows(t.scale(t.matmul_nt(q, k), inv_sqrt_d_));
        Var attended = t.matmul(t.matmul(weights, v), attn.wo);
        x = t.layer_norm_rows(t.add(x, attended), attn.ln_gain, attn.ln_bias);
        x = feed_forward(ffn, x);
    }

    PolicyState state;
    state.instruction = x;
    state.cls = t.slice_rows(x, 0, 1);
    state.t = 1;
    state.instruction_length = length;
    Var words = t.slice_rows(x, 1, length + 1);
    for (const auto& layer : cross_layers_) {
        state.word_keys.push_back(t.matmul(words, layer.cross.wk));
        state.word_values.push_back(t.matmul(words, layer.cross.wv));
    }
    return state;
}

ActionScores PolicyGraph::predict(const PolicyState& state, const Observation& obs) {
    const auto& dims = params_->dims;
    ad::Tape& t = *tape_;
    const int n_cand = static_cast<int>(obs.candidates.size());
    if (n_cand == 0) throw Error("observation has no candidates");
    Mat features(n_cand, dims.d_view);
    for (int i = 0; i < n_cand; ++i) {
        const auto& f = obs.candidates[i].feature;
        if (static_cast<int>(f.size()) != dims.d_view)
            throw Error("candidate feature dimension " + std::to_string(f.size()) + " does not match d_view " +
                        std::to_string(dims.d_view));
        for (int k = 0; k < dims.d_view; ++k) features(i, k) = f[k];
    }

    const bool with_history = params_->variant == Variant::past_action_aware && !state.cls_history.empty();
    const int history = with_history ? static_cast<int>(state.cls_history.size()) : 0;
    const int length = state.instruction_length;

    ActionScores out;
    out.candidates = t.matmul(t.constant(std::move(features)), w_candidate_);
    const std::array<Var, 2> parts{out.candidates, state.cls};
    Var x = t.concat_rows(parts);  // candidates then cls
    const int cls_row = n_cand;
    Var hist;
    if (with_history) hist = t.concat_rows(state.cls_history);

    const std::size_t last = cross_layers_.size() - 1;
    for (std::size_t l = 0; l < cross_layers_.size(); ++l) {
        const auto& layer = cross_layers_[l];
        // Cross attention: language-side rows attend the instruction words.
        Var q = t.matmul(x, layer.cross.wq);
        Var logits = t.scale(t.matmul_nt(q, state.word_keys[l]), inv_sqrt_d_);
        if (l == last) {
            Var cls_logits = t.slice_cols(t.slice_rows(logits, cls_row, 1), 0, length);
            if (with_history) {
                Var hq = t.matmul(hist, layer.cross.wq);
                Var h_logits = t.scale(t.matmul_nt(hq, state.word_keys[l]), inv_sqrt_d_);
                const std::array<Var, 2> rows{t.slice_cols(h_logits, 0, length), cls_logits};
                out.attention_node = t.concat_rows(rows);
            } else {
                out.attention_node = cls_logits;
            }
        }
        Var attended = t.matmul(t.matmul(t.softmax_rows(logits), state.word_values[l]), layer.cross.wo);
        x = t.layer_norm_rows(t.add(x, attended), layer.cross.ln_gain, layer.cross.ln_bias);

        // Self attention over [history; candidates; cls]; history rows are read-only.
        Var context = x;
        if (with_history) {
            const std::array<Var, 2> rows{hist, x};
            context = t.concat_rows(rows);
        }
        Var sq = t.matmul(x, layer.self.wq);
        Var sk = t.matmul(context, layer.self.wk);
        Var sv = t.matmul(context, layer.self.wv);
        Var self_logits = t.scale(t.matmul_nt(sq, sk), inv_sqrt_d_);
        if (l == last) out.score_node = t.slice_cols(t.slice_rows(self_logits, cls_row, 1), history, n_cand);
        Var self_attended = t.matmul(t.matmul(t.softmax_rows(self_logits), sv), layer.self.wo);
        x = t.layer_norm_rows(t.add(x, self_attended), layer.self.ln_gain, layer.self.ln_bias);
        x = feed_forward(layer.ffn, x);
    }
    out.cls_out = t.slice_rows(x, cls_row, 1);
    const Mat& s = t.value(out.score_node);
    out.scores.assign(s.data(), s.data() + s.size());
    out.attention_rows = t.value(out.attention_node);
    return out;
}

PolicyState PolicyGraph::update_state(const PolicyState& state, const ActionScores& scores, std::size_t taken_action) {
    ad::Tape& t = *tape_;
    if (taken_action >= scores.scores.size()) throw Error("taken action out of range");
    Var action = t.slice_rows(scores.candidates, static_cast<int>(taken_action), 1);
    Var input = t.concat_cols(scores.cls_out, action);
    Var gate = t.sigmoid(t.add_row(t.matmul(input, w_gate_), b_gate_));
    Var update = t.tanh(t.add_row(t.matmul(input, w_update_), b_update_));
    // next = cls + gate * (update - cls)
    Var next = t.add(scores.cls_out, t.mul(gate, t.sub(update, scores.cls_out)));

    PolicyState out = state;
    if (params_->variant == Variant::past_action_aware) out.cls_history.push_back(state.cls);
    out.cls = next;
    out.t = state.t + 1;
    return out;
}

Var PolicyGraph::state_value(const ActionScores& scores) {
    ad::Tape& t = *tape_;
    return t.add(t.matmul(scores.cls_out, critic_weight_), critic_bias_);
}

}  // namespace snapnav
