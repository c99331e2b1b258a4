#include "stellar/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stellar {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_finite_row(const Eigen::RowVectorXd& v, const char* layer) {
    if (!v.allFinite()) fail(std::string("non-finite activation in ") + layer);
}

}  // namespace

void FaStConfig::validate() const {
    if (ap_dropout_p < 0.0 || ap_dropout_p > 1.0) fail("ap_dropout_p must be in [0,1]");
    if (contrast_delta < 0.0) fail("contrast_delta must be >= 0");
    if (brightness_delta < 0.0) fail("brightness_delta must be >= 0");
    if (gaussian_sigma < 0.0) fail("gaussian_sigma must be >= 0");
    if (infill_sigma < 0.0) fail("infill_sigma must be >= 0");
}

void ModelConfig::validate() const {
    if (num_heads < 1) fail("num_heads must be >= 1");
    if (head_size < 1) fail("head_size must be >= 1");
    if (embedding_dim < 1) fail("embedding_dim must be >= 1");
    if (learning_rate <= 0.0) fail("learning_rate must be > 0");
    if (epochs < 0) fail("epochs must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (margin < 0.0) fail("margin must be >= 0");
    for (int w : dense_widths)
        if (w < 1) fail("dense widths must be >= 1");
    fast.validate();
}

Json to_json(const FaStConfig& cfg) {
    return Json{{"ap_dropout_p", cfg.ap_dropout_p},
                {"contrast_delta", cfg.contrast_delta},
                {"brightness_delta", cfg.brightness_delta},
                {"gaussian_sigma", cfg.gaussian_sigma},
                {"infill_sigma", cfg.infill_sigma}};
}

Json to_json(const ModelConfig& cfg) {
    return Json{{"num_heads", cfg.num_heads},
                {"head_size", cfg.head_size},
                {"dense_widths", cfg.dense_widths},
                {"embedding_dim", cfg.embedding_dim},
                {"learning_rate", cfg.learning_rate},
                {"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"margin", cfg.margin},
                {"loss_mode", cfg.loss_mode == LossMode::kHinge ? "hinge" : "raw-paper"},
                {"fast", to_json(cfg.fast)}};
}

FaStConfig fast_config_from_json(const Json& j) {
    require_keys(j, {"ap_dropout_p", "contrast_delta", "brightness_delta", "gaussian_sigma",
                     "infill_sigma"},
                 "fast");
    FaStConfig cfg;
    cfg.ap_dropout_p = json_get(j, "ap_dropout_p", cfg.ap_dropout_p);
    cfg.contrast_delta = json_get(j, "contrast_delta", cfg.contrast_delta);
    cfg.brightness_delta = json_get(j, "brightness_delta", cfg.brightness_delta);
    cfg.gaussian_sigma = json_get(j, "gaussian_sigma", cfg.gaussian_sigma);
    cfg.infill_sigma = json_get(j, "infill_sigma", cfg.infill_sigma);
    cfg.validate();
    return cfg;
}

ModelConfig model_config_from_json(const Json& j) {
    require_keys(j, {"num_heads", "head_size", "dense_widths", "embedding_dim", "learning_rate",
                     "epochs", "batch_size", "margin", "loss_mode", "fast"},
                 "model");
    ModelConfig cfg;
    cfg.num_heads = json_get(j, "num_heads", cfg.num_heads);
    cfg.head_size = json_get(j, "head_size", cfg.head_size);
    cfg.dense_widths = json_get(j, "dense_widths", cfg.dense_widths);
    cfg.embedding_dim = json_get(j, "embedding_dim", cfg.embedding_dim);
    cfg.learning_rate = json_get(j, "learning_rate", cfg.learning_rate);
    cfg.epochs = json_get(j, "epochs", cfg.epochs);
    cfg.batch_size = json_get(j, "batch_size", cfg.batch_size);
    cfg.margin = json_get(j, "margin", cfg.margin);
    std::string mode = json_get<std::string>(j, "loss_mode", "hinge");
    if (mode == "hinge") {
        cfg.loss_mode = LossMode::kHinge;
    } else if (mode == "raw-paper") {
        cfg.loss_mode = LossMode::kRawPaper;
    } else {
        fail("loss_mode must be 'hinge' or 'raw-paper', got '" + mode + "'");
    }
    if (j.contains("fast")) cfg.fast = fast_config_from_json(j.at("fast"));
    cfg.validate();
    return cfg;
}

void apply_brightness(std::vector<double>& values, double shift) {
    for (double& v : values) v += shift;
}

void apply_contrast(std::vector<double>& values, double scale) {
    if (values.empty()) return;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double& v : values) v = mean + (v - mean) * scale;
}

std::vector<double> fast_augment(std::span<const double> x, const FaStConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<double> out(x.begin(), x.end());
    if (cfg.ap_dropout_p > 0.0) {
        for (double& v : out) {
            if (rng.uniform() < cfg.ap_dropout_p)
                v = std::clamp(std::abs(rng.normal(0.0, cfg.infill_sigma)), 0.0, 1.0);
        }
    }
    if (cfg.brightness_delta > 0.0)
        apply_brightness(out, rng.uniform(-cfg.brightness_delta, cfg.brightness_delta));
    if (cfg.contrast_delta > 0.0)
        apply_contrast(out, rng.uniform(1.0 - cfg.contrast_delta, 1.0 + cfg.contrast_delta));
    if (cfg.gaussian_sigma > 0.0) {
        for (double& v : out) v += rng.normal(0.0, cfg.gaussian_sigma);
    }
    for (double& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

AttentionResult attention(const Eigen::RowVectorXd& q, const Eigen::MatrixXd& keys,
                          const Eigen::MatrixXd& values, int d_k) {
    if (d_k <= 0) fail("attention: d_k must be > 0");
    if (q.cols() != keys.cols())
        fail("attention: query width " + std::to_string(q.cols()) + " vs key width " +
             std::to_string(keys.cols()));
    if (keys.rows() != values.rows())
        fail("attention: " + std::to_string(keys.rows()) + " keys vs " +
             std::to_string(values.rows()) + " values");
    if (keys.rows() == 0) fail("attention: empty context");

    Eigen::RowVectorXd scores = (q * keys.transpose()) / std::sqrt(static_cast<double>(d_k));
    double mx = scores.maxCoeff();
    Eigen::RowVectorXd w = (scores.array() - mx).exp();
    w /= w.sum();
    return {w, w * values};
}

// ---------------------------------------------------------------------------
// parameter layout

std::vector<TensorSpec> build_layout(const ModelConfig& cfg, int num_aps, int num_classes,
                                     std::size_t& total) {
    std::vector<TensorSpec> layout;
    std::size_t off = 0;
    auto push = [&](std::string name, int rows, int cols) {
        layout.push_back({std::move(name), rows, cols, off});
        off += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    };
    for (int h = 0; h < cfg.num_heads; ++h) {
        std::string p = "head" + std::to_string(h);
        push(p + ".wq", num_aps, cfg.head_size);
        push(p + ".wk", num_aps, cfg.head_size);
        push(p + ".wv", num_classes, cfg.head_size);
    }
    int concat_w = cfg.num_heads * cfg.head_size;
    push("wo", concat_w, concat_w);
    int prev = concat_w;
    for (std::size_t i = 0; i < cfg.dense_widths.size(); ++i) {
        int w = cfg.dense_widths[i];
        push("dense" + std::to_string(i) + ".w", prev, w);
        push("dense" + std::to_string(i) + ".b", 1, w);
        prev = w;
    }
    push("embed.w", prev, cfg.embedding_dim);
    push("embed.b", 1, cfg.embedding_dim);
    total = off;
    return layout;
}

namespace {

// Tensor indices by position in the layout; names are kept for the files.
struct LayoutIndex {
    int wq(int head) const { return 3 * head; }
    int wk(int head) const { return 3 * head + 1; }
    int wv(int head) const { return 3 * head + 2; }
    int wo;
    std::vector<int> dense_w, dense_b;
    int embed_w, embed_b;

    explicit LayoutIndex(const ModelConfig& cfg) {
        wo = 3 * cfg.num_heads;
        int next = wo + 1;
        for (std::size_t i = 0; i < cfg.dense_widths.size(); ++i) {
            dense_w.push_back(next++);
            dense_b.push_back(next++);
        }
        embed_w = next++;
        embed_b = next++;
    }
};

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using MutMap = Eigen::Map<Eigen::MatrixXd>;

ConstMap map_tensor(const std::vector<double>& buf, const TensorSpec& t) {
    return ConstMap(buf.data() + t.offset, t.rows, t.cols);
}

MutMap map_tensor(std::vector<double>& buf, const TensorSpec& t) {
    return MutMap(buf.data() + t.offset, t.rows, t.cols);
}

struct ForwardCache {
    Eigen::RowVectorXd input;
    std::vector<Eigen::RowVectorXd> q_proj;   // per head, 1 x d_k
    std::vector<Eigen::RowVectorXd> weights;  // per head, 1 x N
    Eigen::RowVectorXd concat;
    Eigen::RowVectorXd wo_out;
    std::vector<Eigen::RowVectorXd> layer_in;  // input to each dense layer, then to embed
    std::vector<Eigen::RowVectorXd> pre;       // dense pre-activations
    Eigen::RowVectorXd embed_pre;
    double norm = 0.0;
    Eigen::RowVectorXd unit;
};

Eigen::RowVectorXd forward_pass(const SiameseModel& m, const ContextProjection& ctx,
                                const Eigen::RowVectorXd& q, ForwardCache* cache) {
    const ModelConfig& cfg = m.config();
    const auto& layout = m.layout();
    const auto& params = m.params();
    LayoutIndex idx(cfg);
    int dk = cfg.head_size;

    Eigen::RowVectorXd concat(cfg.num_heads * dk);
    if (cache) {
        cache->input = q;
        cache->q_proj.resize(static_cast<std::size_t>(cfg.num_heads));
        cache->weights.resize(static_cast<std::size_t>(cfg.num_heads));
    }
    for (int h = 0; h < cfg.num_heads; ++h) {
        Eigen::RowVectorXd qi = q * map_tensor(params, layout[static_cast<std::size_t>(idx.wq(h))]);
        AttentionResult ar = attention(qi, ctx.keys[static_cast<std::size_t>(h)],
                                       ctx.values[static_cast<std::size_t>(h)], dk);
        concat.segment(h * dk, dk) = ar.output;
        if (cache) {
            cache->q_proj[static_cast<std::size_t>(h)] = std::move(qi);
            cache->weights[static_cast<std::size_t>(h)] = std::move(ar.weights);
        }
    }
    check_finite_row(concat, "attention");

    Eigen::RowVectorXd x = concat * map_tensor(params, layout[static_cast<std::size_t>(idx.wo)]);
    check_finite_row(x, "attention output projection");
    if (cache) {
        cache->concat = std::move(concat);
        cache->wo_out = x;
        cache->layer_in.clear();
        cache->pre.clear();
    }

    for (std::size_t j = 0; j < cfg.dense_widths.size(); ++j) {
        if (cache) cache->layer_in.push_back(x);
        Eigen::RowVectorXd pre =
            x * map_tensor(params, layout[static_cast<std::size_t>(idx.dense_w[j])]) +
            map_tensor(params, layout[static_cast<std::size_t>(idx.dense_b[j])]);
        check_finite_row(pre, ("dense" + std::to_string(j)).c_str());
        x = pre.cwiseMax(0.0);
        if (cache) cache->pre.push_back(std::move(pre));
    }

    if (cache) cache->layer_in.push_back(x);
    Eigen::RowVectorXd e =
        x * map_tensor(params, layout[static_cast<std::size_t>(idx.embed_w)]) +
        map_tensor(params, layout[static_cast<std::size_t>(idx.embed_b)]);
    check_finite_row(e, "embedding");
    double norm = e.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) fail("non-finite activation in embedding normalization");
    Eigen::RowVectorXd u = e / norm;
    if (cache) {
        cache->embed_pre = std::move(e);
        cache->norm = norm;
        cache->unit = u;
    }
    return u;
}

// Gradients accumulated over a batch before folding the shared context
// projections back onto the projection matrices.
struct GradAccum {
    std::vector<double>* grad = nullptr;
    std::vector<Eigen::MatrixXd> d_ctx_keys;    // per head, N x d_k
    std::vector<Eigen::MatrixXd> d_ctx_values;  // per head, N x d_k
};

void backward_pass(const SiameseModel& m, const ContextProjection& ctx, const ForwardCache& c,
                   const Eigen::RowVectorXd& d_unit, GradAccum& acc) {
    const ModelConfig& cfg = m.config();
    const auto& layout = m.layout();
    LayoutIndex idx(cfg);
    int dk = cfg.head_size;
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    auto g = [&](int i) -> MutMap {
        return map_tensor(*acc.grad, layout[static_cast<std::size_t>(i)]);
    };

    // through L2 normalization: u = e / ||e||
    Eigen::RowVectorXd de = (d_unit - d_unit.dot(c.unit) * c.unit) / c.norm;

    // embedding layer
    const Eigen::RowVectorXd& embed_in = c.layer_in.back();
    g(idx.embed_w).noalias() += embed_in.transpose() * de;
    g(idx.embed_b).noalias() += de;
    Eigen::RowVectorXd dx =
        de * map_tensor(m.params(), layout[static_cast<std::size_t>(idx.embed_w)]).transpose();

    // dense stack, reversed
    for (int j = static_cast<int>(cfg.dense_widths.size()) - 1; j >= 0; --j) {
        auto ju = static_cast<std::size_t>(j);
        Eigen::RowVectorXd dpre =
            dx.cwiseProduct((c.pre[ju].array() > 0.0).cast<double>().matrix());
        g(idx.dense_w[ju]).noalias() += c.layer_in[ju].transpose() * dpre;
        g(idx.dense_b[ju]).noalias() += dpre;
        dx = dpre *
             map_tensor(m.params(), layout[static_cast<std::size_t>(idx.dense_w[ju])]).transpose();
    }

    // output projection
    g(idx.wo).noalias() += c.concat.transpose() * dx;
    Eigen::RowVectorXd dconcat =
        dx * map_tensor(m.params(), layout[static_cast<std::size_t>(idx.wo)]).transpose();

    // attention heads
    for (int h = 0; h < cfg.num_heads; ++h) {
        auto hu = static_cast<std::size_t>(h);
        Eigen::RowVectorXd dh = dconcat.segment(h * dk, dk);
        const Eigen::RowVectorXd& w = c.weights[hu];

        acc.d_ctx_values[hu].noalias() += w.transpose() * dh;
        Eigen::RowVectorXd dw = dh * ctx.values[hu].transpose();
        double dot = dw.dot(w);
        Eigen::RowVectorXd ds = w.cwiseProduct(dw.array().matrix() - Eigen::RowVectorXd::Constant(w.cols(), dot));
        ds *= inv_sqrt_dk;

        Eigen::RowVectorXd dqi = ds * ctx.keys[hu];
        acc.d_ctx_keys[hu].noalias() += ds.transpose() * c.q_proj[hu];
        g(idx.wq(h)).noalias() += c.input.transpose() * dqi;
    }
}

Eigen::RowVectorXd to_row(std::span<const double> v) {
    return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct TripleEmbeddings {
    ForwardCache anchor, positive, negative;
    Eigen::RowVectorXd ua, up, un;
};

double squared_dist(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return (a - b).squaredNorm();
}

}  // namespace

// ---------------------------------------------------------------------------
// SiameseModel

SiameseModel SiameseModel::init(const NormalizedDataset& db, const ModelConfig& cfg) {
    cfg.validate();
    if (db.records.empty()) fail("training database is empty");
    if (db.rps.empty()) fail("training database has no reference points");

    SiameseModel m;
    m.cfg_ = cfg;
    m.num_aps_ = static_cast<int>(db.ap_universe.size());
    m.num_context_ = static_cast<int>(db.records.size());
    m.num_classes_ = static_cast<int>(db.rps.size());
    m.ap_universe_ = db.ap_universe;
    m.rp_ids_.reserve(db.rps.size());
    for (const auto& rp : db.rps) m.rp_ids_.push_back(rp.rp_id);

    m.context_keys_.resize(m.num_context_, m.num_aps_);
    m.context_labels_.reserve(db.records.size());
    for (std::size_t i = 0; i < db.records.size(); ++i) {
        const auto& rec = db.records[i];
        if (rec.values.size() != static_cast<std::size_t>(m.num_aps_))
            fail("record " + std::to_string(i) + " width disagrees with AP universe");
        for (int a = 0; a < m.num_aps_; ++a)
            m.context_keys_(static_cast<Eigen::Index>(i), a) =
                rec.values[static_cast<std::size_t>(a)];
        int cls = db.rp_index(rec.rp_id);
        if (cls < 0) fail("record " + std::to_string(i) + " references unknown RP");
        m.context_labels_.push_back(cls);
    }

    std::size_t total = 0;
    m.layout_ = build_layout(cfg, m.num_aps_, m.num_classes_, total);
    m.params_.assign(total, 0.0);
    for (std::size_t t = 0; t < m.layout_.size(); ++t) {
        const auto& spec = m.layout_[t];
        bool is_bias = spec.rows == 1 && spec.name.ends_with(".b");
        bool is_qk = spec.name.ends_with(".wq") || spec.name.ends_with(".wk");
        Rng rng(derive_seed(cfg.seed, {hash_tag("init"), static_cast<std::uint64_t>(t)}));
        // Glorot for weights. Biases get a small random spread rather than
        // zeros: with zero biases the ReLU stack is positively homogeneous
        // and the normalized embedding of a narrow net can collapse to a
        // constant direction at init. Query/key projections are scaled up
        // so attention scores start with O(1) spread across the context;
        // near-uniform attention collapses the embeddings and stalls the
        // triplet loss at the margin.
        double limit = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
        if (is_bias) limit = 0.1;
        if (is_qk) limit *= cfg.attention_init_gain;
        auto mt = map_tensor(m.params_, spec);
        for (Eigen::Index col = 0; col < mt.cols(); ++col)
            for (Eigen::Index row = 0; row < mt.rows(); ++row)
                mt(row, col) = rng.uniform(-limit, limit);
    }
    return m;
}

Eigen::Map<const Eigen::MatrixXd> SiameseModel::tensor(std::string_view name) const {
    for (const auto& t : layout_) {
        if (t.name == name) return map_tensor(params_, t);
    }
    fail("unknown tensor '" + std::string(name) + "'");
}

ContextProjection SiameseModel::project_context() const {
    LayoutIndex idx(cfg_);
    ContextProjection ctx;
    ctx.keys.reserve(static_cast<std::size_t>(cfg_.num_heads));
    ctx.values.reserve(static_cast<std::size_t>(cfg_.num_heads));
    for (int h = 0; h < cfg_.num_heads; ++h) {
        ctx.keys.push_back(context_keys_ *
                           map_tensor(params_, layout_[static_cast<std::size_t>(idx.wk(h))]));
        // V is one-hot per row, so V * Wv is a row gather of Wv.
        ConstMap wv = map_tensor(params_, layout_[static_cast<std::size_t>(idx.wv(h))]);
        Eigen::MatrixXd vp(num_context_, cfg_.head_size);
        for (int i = 0; i < num_context_; ++i)
            vp.row(i) = wv.row(context_labels_[static_cast<std::size_t>(i)]);
        ctx.values.push_back(std::move(vp));
    }
    return ctx;
}

Embedding SiameseModel::multi_head(std::span<const double> q) const {
    if (q.size() != static_cast<std::size_t>(num_aps_))
        fail("input has " + std::to_string(q.size()) + " values, model expects " +
             std::to_string(num_aps_));
    ContextProjection ctx = project_context();
    Eigen::RowVectorXd u = forward_pass(*this, ctx, to_row(q), nullptr);
    return {u.data(), u.data() + u.size()};
}

Embedding SiameseModel::encode(std::span<const double> q) const {
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (!std::isfinite(q[i]) || q[i] < 0.0 || q[i] > 1.0)
            fail("encode input not normalized at index " + std::to_string(i));
    }
    return multi_head(q);
}

std::string SiameseModel::params_hash() const {
    return hash_hex(fnv1a(params_.data(), params_.size() * sizeof(double)));
}

Json SiameseModel::to_json() const {
    Json tensors = Json::array();
    for (const auto& t : layout_)
        tensors.push_back(Json{{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    std::vector<double> keys_flat;
    keys_flat.reserve(static_cast<std::size_t>(context_keys_.size()));
    for (Eigen::Index r = 0; r < context_keys_.rows(); ++r)
        for (Eigen::Index c = 0; c < context_keys_.cols(); ++c)
            keys_flat.push_back(context_keys_(r, c));
    return Json{{"format", "stellar-model"},
                {"version", 1},
                {"kind", "siamese"},
                {"config", stellar::to_json(cfg_)},
                {"seed", cfg_.seed},
                {"num_aps", num_aps_},
                {"num_context", num_context_},
                {"num_classes", num_classes_},
                {"ap_universe", ap_universe_},
                {"rp_ids", rp_ids_},
                {"context_labels", context_labels_},
                {"context_keys", keys_flat},
                {"tensors", tensors},
                {"params", params_}};
}

SiameseModel SiameseModel::from_json(const Json& j) {
    if (json_get<std::string>(j, "format", "") != "stellar-model" ||
        json_get<std::string>(j, "kind", "") != "siamese")
        fail("not a siamese model file");
    if (json_get<int>(j, "version", 0) != 1) fail("unsupported model file version");

    SiameseModel m;
    m.cfg_ = model_config_from_json(j.at("config"));
    m.cfg_.seed = json_get<std::uint64_t>(j, "seed", 0);
    m.num_aps_ = j.at("num_aps").get<int>();
    m.num_context_ = j.at("num_context").get<int>();
    m.num_classes_ = j.at("num_classes").get<int>();
    m.ap_universe_ = j.at("ap_universe").get<std::vector<std::string>>();
    m.rp_ids_ = j.at("rp_ids").get<std::vector<std::string>>();
    m.context_labels_ = j.at("context_labels").get<std::vector<int>>();

    auto keys_flat = j.at("context_keys").get<std::vector<double>>();
    if (keys_flat.size() !=
        static_cast<std::size_t>(m.num_context_) * static_cast<std::size_t>(m.num_aps_))
        fail("context_keys size mismatch");
    m.context_keys_.resize(m.num_context_, m.num_aps_);
    std::size_t p = 0;
    for (Eigen::Index r = 0; r < m.context_keys_.rows(); ++r)
        for (Eigen::Index c = 0; c < m.context_keys_.cols(); ++c)
            m.context_keys_(r, c) = keys_flat[p++];

    std::size_t total = 0;
    m.layout_ = build_layout(m.cfg_, m.num_aps_, m.num_classes_, total);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != m.layout_.size()) fail("tensor list size mismatch");
    for (std::size_t i = 0; i < m.layout_.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != m.layout_[i].name ||
            t.at("rows").get<int>() != m.layout_[i].rows ||
            t.at("cols").get<int>() != m.layout_[i].cols)
            fail("tensor '" + m.layout_[i].name + "' shape mismatch");
    }
    m.params_ = j.at("params").get<std::vector<double>>();
    if (m.params_.size() != total) fail("parameter count mismatch");
    return m;
}

void SiameseModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path + "' for writing");
    out << to_json().dump(2) << '\n';
    if (!out) fail("write failed for '" + path + "'");
}

SiameseModel SiameseModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    Json j = Json::parse(in);
    return from_json(j);
}

// ---------------------------------------------------------------------------
// loss

double triplet_loss(const std::vector<EmbeddingTriple>& batch, double margin, LossMode mode) {
    double total = 0.0;
    for (const auto& t : batch) {
        if (t.anchor.size() != t.positive.size() || t.anchor.size() != t.negative.size())
            fail("triplet_loss: embedding dimension mismatch");
        double dp = 0.0, dn = 0.0;
        for (std::size_t i = 0; i < t.anchor.size(); ++i) {
            double a = t.anchor[i];
            double p = a - t.positive[i];
            double n = a - t.negative[i];
            dp += p * p;
            dn += n * n;
        }
        double raw = dp - dn;
        total += mode == LossMode::kHinge ? std::max(0.0, raw + margin) : raw;
    }
    return total;
}

namespace {

double batch_loss_impl(const SiameseModel& model, const ContextProjection& ctx,
                       const std::vector<Triplet>& batch, GradAccum* acc) {
    const ModelConfig& cfg = model.config();
    double total = 0.0;
    ForwardCache ca, cp, cn;
    for (const auto& t : batch) {
        Eigen::RowVectorXd ua = forward_pass(model, ctx, to_row(t.anchor.values), acc ? &ca : nullptr);
        Eigen::RowVectorXd up = forward_pass(model, ctx, to_row(t.positive.values), acc ? &cp : nullptr);
        Eigen::RowVectorXd un = forward_pass(model, ctx, to_row(t.negative.values), acc ? &cn : nullptr);
        double dp = squared_dist(ua, up);
        double dn = squared_dist(ua, un);
        double raw = dp - dn;
        bool active = true;
        if (cfg.loss_mode == LossMode::kHinge) {
            double v = raw + cfg.margin;
            if (v > 0.0) {
                total += v;
            } else {
                active = false;
            }
        } else {
            total += raw;
        }
        if (acc && active) {
            Eigen::RowVectorXd da = 2.0 * (un - up);
            Eigen::RowVectorXd dpos = 2.0 * (up - ua);
            Eigen::RowVectorXd dneg = 2.0 * (ua - un);
            backward_pass(model, ctx, ca, da, *acc);
            backward_pass(model, ctx, cp, dpos, *acc);
            backward_pass(model, ctx, cn, dneg, *acc);
        }
    }
    return total;
}

}  // namespace

double triplet_batch_loss(const SiameseModel& model, const std::vector<Triplet>& batch) {
    ContextProjection ctx = model.project_context();
    return batch_loss_impl(model, ctx, batch, nullptr);
}

double triplet_batch_gradient(const SiameseModel& model, const std::vector<Triplet>& batch,
                              std::vector<double>& grad) {
    const ModelConfig& cfg = model.config();
    grad.assign(model.params().size(), 0.0);
    ContextProjection ctx = model.project_context();
    GradAccum acc;
    acc.grad = &grad;
    acc.d_ctx_keys.assign(static_cast<std::size_t>(cfg.num_heads),
                          Eigen::MatrixXd::Zero(model.num_context(), cfg.head_size));
    acc.d_ctx_values.assign(static_cast<std::size_t>(cfg.num_heads),
                            Eigen::MatrixXd::Zero(model.num_context(), cfg.head_size));
    double loss = batch_loss_impl(model, ctx, batch, &acc);

    // Fold shared context-projection gradients back onto Wk and Wv.
    LayoutIndex idx(cfg);
    const auto& layout = model.layout();
    const auto& labels = model.context_labels();
    for (int h = 0; h < cfg.num_heads; ++h) {
        auto hu = static_cast<std::size_t>(h);
        map_tensor(grad, layout[static_cast<std::size_t>(idx.wk(h))]).noalias() +=
            model.context_keys().transpose() * acc.d_ctx_keys[hu];
        auto wv_grad = map_tensor(grad, layout[static_cast<std::size_t>(idx.wv(h))]);
        for (int i = 0; i < model.num_context(); ++i)
            wv_grad.row(labels[static_cast<std::size_t>(i)]) += acc.d_ctx_values[hu].row(i);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// trainer

TrainResult train(const NormalizedDataset& db, const MinerConfig& miner_cfg,
                  const ModelConfig& model_cfg) {
    model_cfg.validate();
    if (db.rps.size() < 2) fail("training needs at least 2 reference points");

    TrainResult result;
    result.model = SiameseModel::init(db, model_cfg);
    SiameseModel& model = result.model;
    TripletMiner miner(db, miner_cfg);

    std::size_t n_params = model.params().size();
    std::vector<double> grad(n_params, 0.0);
    std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0);
    long long t = 0;

    std::size_t n = db.records.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < model_cfg.epochs; ++epoch) {
        std::vector<Triplet> triplets = miner.mine_epoch(epoch);
        Rng shuffle_rng(derive_seed(model_cfg.seed,
                                    {hash_tag("shuffle"), static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);

        double epoch_sum = 0.0;
        int step = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(model_cfg.batch_size), ++step) {
            std::size_t end = std::min(n, start + static_cast<std::size_t>(model_cfg.batch_size));
            std::vector<Triplet> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                Triplet item = triplets[order[i]];
                // Every branch input passes through FaSt with its own
                // draws. Augmenting only one branch lets the loss key on
                // the augmentation signature instead of location.
                Rng fast_rng(derive_seed(model_cfg.seed,
                                         {hash_tag("fast"), static_cast<std::uint64_t>(epoch),
                                          static_cast<std::uint64_t>(order[i])}));
                item.anchor.values = fast_augment(item.anchor.values, model_cfg.fast, fast_rng);
                item.positive.values = fast_augment(item.positive.values, model_cfg.fast, fast_rng);
                item.negative.values = fast_augment(item.negative.values, model_cfg.fast, fast_rng);
                batch.push_back(std::move(item));
            }

            double loss = triplet_batch_gradient(model, batch, grad);
            if (!std::isfinite(loss))
                fail("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                     std::to_string(step));
            epoch_sum += loss;

            ++t;
            double bc1 = 1.0 - std::pow(model_cfg.adam_beta1, static_cast<double>(t));
            double bc2 = 1.0 - std::pow(model_cfg.adam_beta2, static_cast<double>(t));
            auto& params = model.params();
            for (std::size_t i = 0; i < n_params; ++i) {
                adam_m[i] = model_cfg.adam_beta1 * adam_m[i] + (1.0 - model_cfg.adam_beta1) * grad[i];
                adam_v[i] = model_cfg.adam_beta2 * adam_v[i] +
                            (1.0 - model_cfg.adam_beta2) * grad[i] * grad[i];
                params[i] -= model_cfg.learning_rate * (adam_m[i] / bc1) /
                             (std::sqrt(adam_v[i] / bc2) + model_cfg.adam_epsilon);
            }
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
    }
    return result;
}

}  // namespace stellar
