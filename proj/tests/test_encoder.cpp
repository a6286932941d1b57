#include <catch2/catch_amalgamated.hpp>

#include <iedr/encoder.hpp>

#include "test_helpers.hpp"

using namespace iedr;
using iedr::test::random_tensor;

namespace {

struct Fixture {
    ParameterStore store;
    Value embeddings;
    RngStream init{7, "init"};

    explicit Fixture(std::size_t vocab = 8, std::size_t d = 4) {
        embeddings = store.create("emb", init_embedding(vocab, d, init), Group::omega);
    }

    FeatureEncoder make(EncoderConfig cfg, const std::string& prefix = "enc") {
        return FeatureEncoder::create(store, prefix, cfg, init);
    }

    // Manual one-hidden-layer MLP from registered parameters.
    std::vector<double> mlp(const std::string& prefix, const std::vector<double>& x) const {
        const auto& w1 = store.at(prefix + ".l1.w").value.tensor();
        const auto& b1 = store.at(prefix + ".l1.b").value.tensor();
        const auto& w2 = store.at(prefix + ".l2.w").value.tensor();
        const auto& b2 = store.at(prefix + ".l2.b").value.tensor();
        std::vector<double> h(w1.shape[0]);
        for (std::size_t o = 0; o < w1.shape[0]; ++o) {
            double acc = b1.data[o];
            for (std::size_t i = 0; i < x.size(); ++i) acc += w1.at(o, i) * x[i];
            h[o] = std::max(0.0, acc);
        }
        std::vector<double> y(w2.shape[0]);
        for (std::size_t o = 0; o < w2.shape[0]; ++o) {
            double acc = b2.data[o];
            for (std::size_t i = 0; i < h.size(); ++i) acc += w2.at(o, i) * h[i];
            y[o] = acc;
        }
        return y;
    }

    std::vector<double> emb_row(std::size_t id) const {
        const auto& t = embeddings.tensor();
        return {t.data.begin() + id * t.shape[1], t.data.begin() + (id + 1) * t.shape[1]};
    }
};

EncoderConfig sign_cfg(std::size_t d = 4, std::size_t hidden = 6) {
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::Sign;
    cfg.embed_dim = d;
    cfg.hidden_dim = hidden;
    return cfg;
}

} // namespace

TEST_CASE("SIGN on identical embeddings collapses to one pair term") {
    Fixture f;
    // Make rows 1 and 2 identical.
    auto& emb = f.embeddings.tensor();
    for (std::size_t c = 0; c < 4; ++c) emb.at(2, c) = emb.at(1, c);
    auto enc = f.make(sign_cfg());
    auto two = enc.encode(f.embeddings, {1, 2}).tensor();
    auto one = enc.encode(f.embeddings, {1}).tensor();
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(two.data[c] == Catch::Approx(one.data[c]).margin(1e-12));
}

TEST_CASE("SIGN on a singleton is h(z*z)") {
    Fixture f;
    auto enc = f.make(sign_cfg());
    auto out = enc.encode(f.embeddings, {3}).tensor();
    auto z = f.emb_row(3);
    std::vector<double> prod(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) prod[c] = z[c] * z[c];
    auto expect = f.mlp("enc.h", prod);
    for (std::size_t c = 0; c < z.size(); ++c)
        CHECK(out.data[c] == Catch::Approx(expect[c]).margin(1e-12));
}

TEST_CASE("SIGN singleton without self-pairs is rejected") {
    Fixture f;
    auto cfg = sign_cfg();
    cfg.include_self_pairs = false;
    auto enc = f.make(cfg);
    CHECK_THROWS_AS(enc.encode(f.embeddings, {3}), std::invalid_argument);
}

TEST_CASE("SIGN matches the brute-force ordered-pair loop") {
    Fixture f;
    auto enc = f.make(sign_cfg());
    std::vector<std::size_t> ids{0, 3, 5, 6};
    auto out = enc.encode(f.embeddings, ids).tensor();

    std::vector<double> acc(4, 0.0);
    std::size_t pairs = 0;
    for (auto i : ids)
        for (auto j : ids) {
            auto zi = f.emb_row(i);
            auto zj = f.emb_row(j);
            std::vector<double> prod(4);
            for (std::size_t c = 0; c < 4; ++c) prod[c] = zi[c] * zj[c];
            auto h = f.mlp("enc.h", prod);
            for (std::size_t c = 0; c < 4; ++c) acc[c] += h[c];
            ++pairs;
        }
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(out.data[c] == Catch::Approx(acc[c] / static_cast<double>(pairs)).margin(1e-12));
}

TEST_CASE("AVG encoder") {
    Fixture f;
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::Avg;
    cfg.embed_dim = 4;
    auto enc = f.make(cfg);

    SECTION("one feature returns its embedding") {
        auto out = enc.encode(f.embeddings, {2}).tensor();
        CHECK(out.data == f.emb_row(2));
    }
    SECTION("mean of two one-hot-like rows") {
        auto& emb = f.embeddings.tensor();
        for (std::size_t c = 0; c < 4; ++c) {
            emb.at(0, c) = c == 0 ? 1.0 : 0.0;
            emb.at(1, c) = c == 1 ? 1.0 : 0.0;
        }
        auto out = enc.encode(f.embeddings, {0, 1}).tensor();
        CHECK(out.data == std::vector<double>{0.5, 0.5, 0, 0});
    }
}

TEST_CASE("MLP encoder composes the top net over AVG") {
    Fixture f;
    EncoderConfig avg_cfg;
    avg_cfg.variant = EncoderVariant::Avg;
    avg_cfg.embed_dim = 4;
    auto avg = f.make(avg_cfg, "avg");
    EncoderConfig mlp_cfg;
    mlp_cfg.variant = EncoderVariant::Mlp;
    mlp_cfg.embed_dim = 4;
    mlp_cfg.hidden_dim = 5;
    auto mlp = f.make(mlp_cfg, "mlp");

    std::vector<std::size_t> ids{1, 4, 6};
    auto got = mlp.encode(f.embeddings, ids).tensor();
    auto avg_out = avg.encode(f.embeddings, ids).tensor();
    auto expect = f.mlp("mlp.top", avg_out.data);
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(got.data[c] == Catch::Approx(expect[c]).margin(1e-12));
}

TEST_CASE("MLP with an identity-degenerate net reproduces AVG") {
    Fixture f;
    // Positive embeddings so the ReLU is transparent.
    for (auto& v : f.embeddings.tensor().data) v = std::abs(v) + 0.1;
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::Mlp;
    cfg.embed_dim = 4;
    cfg.hidden_dim = 4;
    auto enc = f.make(cfg, "id");
    auto set_identity = [&](const std::string& name) {
        auto& w = f.store.at(name).value.tensor();
        for (std::size_t r = 0; r < w.shape[0]; ++r)
            for (std::size_t c = 0; c < w.shape[1]; ++c) w.at(r, c) = r == c ? 1.0 : 0.0;
    };
    set_identity("id.top.l1.w");
    set_identity("id.top.l2.w");

    EncoderConfig avg_cfg;
    avg_cfg.variant = EncoderVariant::Avg;
    avg_cfg.embed_dim = 4;
    auto avg = f.make(avg_cfg, "avg2");
    std::vector<std::size_t> ids{0, 2, 7};
    CHECK(enc.encode(f.embeddings, ids).tensor().data ==
          avg.encode(f.embeddings, ids).tensor().data);
}

TEST_CASE("BI encoder") {
    Fixture f;
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::Bi;
    cfg.embed_dim = 4;
    auto enc = f.make(cfg);

    SECTION("two identical embeddings give z*z") {
        auto& emb = f.embeddings.tensor();
        for (std::size_t c = 0; c < 4; ++c) emb.at(5, c) = emb.at(4, c);
        auto out = enc.encode(f.embeddings, {4, 5}).tensor();
        auto z = f.emb_row(4);
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(out.data[c] == Catch::Approx(z[c] * z[c]).margin(1e-12));
    }
    SECTION("orthogonal one-hots zero the cross terms") {
        auto& emb = f.embeddings.tensor();
        for (std::size_t c = 0; c < 4; ++c) {
            emb.at(0, c) = c == 0 ? 1.0 : 0.0;
            emb.at(1, c) = c == 1 ? 1.0 : 0.0;
        }
        cfg.include_self_pairs = false;
        auto no_self = f.make(cfg, "bi2");
        auto out = no_self.encode(f.embeddings, {0, 1}).tensor();
        CHECK(out.data == std::vector<double>{0, 0, 0, 0});
    }
    SECTION("matches the brute-force pair loop") {
        auto out = enc.encode(f.embeddings, {1, 3, 6}).tensor();
        std::vector<std::size_t> ids{1, 3, 6};
        std::vector<double> acc(4, 0.0);
        for (auto i : ids)
            for (auto j : ids) {
                auto zi = f.emb_row(i);
                auto zj = f.emb_row(j);
                for (std::size_t c = 0; c < 4; ++c) acc[c] += zi[c] * zj[c];
            }
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(out.data[c] == Catch::Approx(acc[c] / 9.0).margin(1e-12));
    }
}

TEST_CASE("permutation invariance of every variant") {
    Fixture f;
    std::vector<std::size_t> ids{0, 2, 5, 7};
    std::vector<std::size_t> perm{7, 0, 5, 2};
    for (auto variant :
         {EncoderVariant::Sign, EncoderVariant::Avg, EncoderVariant::Mlp, EncoderVariant::Bi}) {
        EncoderConfig cfg;
        cfg.variant = variant;
        cfg.embed_dim = 4;
        cfg.hidden_dim = 5;
        auto enc = f.make(cfg, std::string("perm.") + encoder_variant_name(variant));
        auto a = enc.encode(f.embeddings, ids).tensor();
        auto b = enc.encode(f.embeddings, perm).tensor();
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(a.data[c] == Catch::Approx(b.data[c]).margin(1e-12));
    }
}

TEST_CASE("SIGN with identity h equals BI") {
    Fixture f;
    auto cfg = sign_cfg(4, 4);
    auto sign = f.make(cfg, "sid");
    // h(x) = I relu(I x + C) - C = x for x > -C.
    const double C = 1000.0;
    auto& w1 = f.store.at("sid.h.l1.w").value.tensor();
    auto& b1 = f.store.at("sid.h.l1.b").value.tensor();
    auto& w2 = f.store.at("sid.h.l2.w").value.tensor();
    auto& b2 = f.store.at("sid.h.l2.b").value.tensor();
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            w1.at(r, c) = r == c ? 1.0 : 0.0;
            w2.at(r, c) = r == c ? 1.0 : 0.0;
        }
    for (std::size_t r = 0; r < 4; ++r) {
        b1.data[r] = C;
        b2.data[r] = -C;
    }
    EncoderConfig bi_cfg;
    bi_cfg.variant = EncoderVariant::Bi;
    bi_cfg.embed_dim = 4;
    auto bi = f.make(bi_cfg, "bid");
    std::vector<std::size_t> ids{0, 3, 6};
    auto a = sign.encode(f.embeddings, ids).tensor();
    auto b = bi.encode(f.embeddings, ids).tensor();
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(a.data[c] == Catch::Approx(b.data[c]).margin(1e-9));
}

TEST_CASE("output dimension is d for every variant") {
    Fixture f;
    for (auto variant :
         {EncoderVariant::Sign, EncoderVariant::Avg, EncoderVariant::Mlp, EncoderVariant::Bi}) {
        EncoderConfig cfg;
        cfg.variant = variant;
        cfg.embed_dim = 4;
        cfg.hidden_dim = 3;
        auto enc = f.make(cfg, std::string("dim.") + encoder_variant_name(variant));
        auto out = enc.encode(f.embeddings, {1, 2});
        CHECK(out.tensor().shape == std::vector<std::size_t>{1, 4});
    }
}

TEST_CASE("empty feature set is rejected") {
    Fixture f;
    auto enc = f.make(sign_cfg());
    CHECK_THROWS_AS(enc.encode(f.embeddings, {}), std::invalid_argument);
}
