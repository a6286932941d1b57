#include <catch2/catch_amalgamated.hpp>

#include <iedr/synthetic.hpp>
#include <iedr/train.hpp>

#include "test_helpers.hpp"

using namespace iedr;
using iedr::test::random_tensor;

namespace {

Value rows(std::vector<std::vector<double>> data) {
    const std::size_t n = data.size(), d = data[0].size();
    Tensor t({n, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) t.at(r, c) = data[r][c];
    return Value::constant(t);
}

ModelConfig small_model(std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.encoder.embed_dim = 6;
    cfg.encoder.hidden_dim = 8;
    cfg.factors.hidden_dim = 8;
    cfg.q_hidden = 8;
    cfg.seed = seed;
    return cfg;
}

TrainOptions small_options(std::uint64_t seed = 1) {
    TrainOptions opt;
    opt.batch_size = 16;
    opt.epochs = 2;
    opt.cicl.num_negatives = 3;
    opt.dis.num_negatives = 2;
    opt.eval.eval_negatives = 20;
    opt.seed = seed;
    return opt;
}

struct Toy {
    SyntheticDataset ds;
    std::vector<Instance> train;
    ItemCatalog catalog;
    UserHistory history;

    explicit Toy(std::uint64_t seed = 1, std::size_t users = 12, std::size_t items = 24,
                 std::size_t contexts = 4)
        : ds(make(seed, users, items, contexts)), catalog(ds.instances) {
        RngStream rng(seed, "toy.negatives");
        train = augment_with_negatives(ds.instances, catalog, 2, rng);
        history = user_item_history(ds.instances, catalog);
    }

    static SyntheticDataset make(std::uint64_t seed, std::size_t users, std::size_t items,
                                 std::size_t contexts) {
        SyntheticSpec spec;
        spec.n_users = users;
        spec.n_items = items;
        spec.n_contexts = contexts;
        spec.seed = seed;
        spec.positives_per_context = 2;
        return generate_synthetic(spec);
    }

    std::vector<const Instance*> batch(std::size_t n) const {
        std::vector<const Instance*> out;
        for (std::size_t i = 0; i < n && i < train.size(); ++i) out.push_back(&train[i]);
        return out;
    }
};

} // namespace

TEST_CASE("prediction head closed forms") {
    SECTION("all-zero factors give probability one half") {
        FactorPair u{rows({{0, 0}}), rows({{0, 0}})};
        FactorPair v{rows({{0, 0}}), rows({{0, 0}})};
        auto p = predict_probs(u, v).tensor();
        CHECK(p.data[0] == Catch::Approx(0.5));
        CHECK(predict_logits(u, v).tensor().data[0] == 0.0);
    }
    SECTION("factor sums of ones give logit two") {
        FactorPair u{rows({{1, 0}}), rows({{0, 1}})};
        FactorPair v{rows({{0.5, 0.5}}), rows({{0.5, 0.5}})};
        auto p = predict_probs(u, v).tensor();
        CHECK(p.data[0] == Catch::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-9));
        CHECK(p.data[0] == Catch::Approx(0.8808).margin(5e-5));
    }
    SECTION("random factors match an independent dot product") {
        RngStream rng(3, "pred");
        Tensor ui = random_tensor({1, 5}, rng), ue = random_tensor({1, 5}, rng);
        Tensor vi = random_tensor({1, 5}, rng), ve = random_tensor({1, 5}, rng);
        double logit = 0;
        for (std::size_t k = 0; k < 5; ++k)
            logit += (ui.data[k] + ue.data[k]) * (vi.data[k] + ve.data[k]);
        FactorPair u{Value::constant(ui), Value::constant(ue)};
        FactorPair v{Value::constant(vi), Value::constant(ve)};
        CHECK(predict_logits(u, v).tensor().data[0] == Catch::Approx(logit).epsilon(1e-12));
    }
}

TEST_CASE("rp loss closed forms") {
    auto loss1 = [](double p, double y) {
        return rp_loss(Value::constant(Tensor({1}, {p})), {y}).tensor().value();
    };
    CHECK(loss1(0.5, 1) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss1(0.5, 0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss1(1.0, 1) == Catch::Approx(0.0).margin(1e-6));
    CHECK(loss1(0.9, 0) == Catch::Approx(-std::log(0.1)).epsilon(1e-9));
}

TEST_CASE("noCIED leaves theta parameters bit-identical") {
    Toy toy;
    IedrModel model(toy.ds.vocab.size(), small_model());
    auto opt = small_options();
    opt.cicl_on = false;
    opt.dis.mode = DisMode::Off;
    Trainer trainer(model, opt);
    std::vector<Tensor> theta_before;
    for (auto* p : model.params().group(Group::theta)) theta_before.push_back(p->value.tensor());
    trainer.train_step(toy.batch(16));
    std::size_t k = 0;
    for (auto* p : model.params().group(Group::theta))
        CHECK(p->value.tensor().data == theta_before[k++].data);
}

TEST_CASE("theta moves only through step 1") {
    Toy toy;
    IedrModel model(toy.ds.vocab.size(), small_model());
    auto opt = small_options();
    opt.step1_every = 2; // step 1 runs on batches 0, 2, 4, ...
    Trainer trainer(model, opt);

    auto theta_snapshot = [&] {
        std::vector<Tensor> out;
        for (auto* p : model.params().group(Group::theta)) out.push_back(p->value.tensor());
        return out;
    };
    trainer.train_step(toy.batch(16)); // batch 0: step 1 runs
    auto after0 = theta_snapshot();
    trainer.train_step(toy.batch(16)); // batch 1: step 1 skipped
    auto after1 = theta_snapshot();
    std::size_t k = 0;
    for ([[maybe_unused]] auto* p : model.params().group(Group::theta)) {
        CHECK(after1[k].data == after0[k].data);
        ++k;
    }
    trainer.train_step(toy.batch(16)); // batch 2: step 1 runs again
    auto after2 = theta_snapshot();
    bool changed = false;
    for (std::size_t i = 0; i < after2.size(); ++i)
        if (after2[i].data != after1[i].data) changed = true;
    CHECK(changed);
}

TEST_CASE("gradient groups separate after a full step") {
    Toy toy;
    IedrModel model(toy.ds.vocab.size(), small_model());
    Trainer trainer(model, small_options());
    trainer.train_step(toy.batch(16));
    // Step 2 ran last: theta grads were cleared after step 1 and the step-2
    // backward must not have touched them.
    for (auto* p : model.params().group(Group::theta))
        for (double g : p->value.grad().data) CHECK(g == 0.0);
    double omega_norm = 0;
    for (auto* p : model.params().group(Group::omega))
        for (double g : p->value.grad().data) omega_norm += g * g;
    CHECK(omega_norm > 0.0);
}

TEST_CASE("zero lambdas reproduce a pure RP trainer on the omega group") {
    Toy toy;
    auto opt = small_options();
    opt.lambda1 = 0.0;
    opt.lambda2 = 0.0;

    IedrModel full(toy.ds.vocab.size(), small_model());
    Trainer full_trainer(full, opt);

    auto rp_only = opt;
    rp_only.cicl_on = false;
    rp_only.dis.mode = DisMode::Off;
    IedrModel twin(toy.ds.vocab.size(), small_model());
    Trainer twin_trainer(twin, rp_only);

    for (int step = 0; step < 3; ++step) {
        full_trainer.train_step(toy.batch(16));
        twin_trainer.train_step(toy.batch(16));
    }
    for (auto* p : full.params().group(Group::omega)) {
        const auto& q = twin.params().at(p->name);
        for (std::size_t i = 0; i < p->value.tensor().numel(); ++i)
            CHECK(p->value.tensor().data[i] ==
                  Catch::Approx(q.value.tensor().data[i]).margin(1e-12));
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    Toy toy;
    auto opt = small_options();
    opt.lr = 0.0;
    IedrModel model(toy.ds.vocab.size(), small_model());
    Trainer trainer(model, opt);
    auto before = model.params().snapshot();
    trainer.train_step(toy.batch(16));
    trainer.train_step(toy.batch(16));
    auto after = model.params().snapshot();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].data == after[i].data);
}

TEST_CASE("loss report decomposes exactly") {
    Toy toy;
    auto opt = small_options();
    opt.lambda1 = 0.3;
    opt.lambda2 = 0.7;
    IedrModel model(toy.ds.vocab.size(), small_model());
    Trainer trainer(model, opt);
    auto r = trainer.train_step(toy.batch(16));
    CHECK(std::abs(r.total - (r.rp + 0.3 * (r.cicl_u + r.cicl_v) + 0.7 * (r.dis_u + r.dis_v))) <
          1e-10);
}

TEST_CASE("non-finite losses abort with a term dump") {
    Toy toy;
    IedrModel model(toy.ds.vocab.size(), small_model());
    Trainer trainer(model, small_options());
    auto& emb = model.params().at("embeddings").value.tensor();
    const std::size_t used = toy.train[0].user_feats[0];
    emb.at(used, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_MATCHES(trainer.train_step(toy.batch(16)), NumericError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("rp=")));
}

TEST_CASE("batches of fewer than two rows are rejected") {
    Toy toy;
    IedrModel model(toy.ds.vocab.size(), small_model());
    Trainer trainer(model, small_options());
    CHECK_THROWS_AS(trainer.train_step(toy.batch(1)), std::invalid_argument);
}

TEST_CASE("fit on ten instances with a huge batch runs one step per epoch") {
    Toy toy;
    std::vector<Instance> ten(toy.train.begin(), toy.train.begin() + 10);
    auto opt = small_options();
    opt.batch_size = 1024;
    opt.epochs = 1;
    IedrModel model(toy.ds.vocab.size(), small_model());
    Trainer trainer(model, opt);
    auto split = split_leave_last_two(toy.ds.instances, {.min_records = 5});
    auto result = trainer.fit(ten, split.valid, toy.catalog, toy.history);
    REQUIRE(result.log.size() == 1);
    CHECK(result.log[0].batches == 1);
}

TEST_CASE("fit rejects an empty training set") {
    Toy toy;
    IedrModel model(toy.ds.vocab.size(), small_model());
    Trainer trainer(model, small_options());
    CHECK_THROWS_AS(trainer.fit({}, {}, toy.catalog, toy.history), std::invalid_argument);
}

TEST_CASE("fixed seed reproduces the training-log losses") {
    Toy toy;
    auto split = split_leave_last_two(toy.ds.instances, {.min_records = 5});
    auto run = [&] {
        IedrModel model(toy.ds.vocab.size(), small_model());
        Trainer trainer(model, small_options());
        return trainer.fit(toy.train, split.valid, toy.catalog, toy.history);
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t e = 0; e < a.log.size(); ++e) {
        CHECK(a.log[e].mean.rp == b.log[e].mean.rp);
        CHECK(a.log[e].mean.cicl_u == b.log[e].mean.cicl_u);
        CHECK(a.log[e].mean.dis_v == b.log[e].mean.dis_v);
        CHECK(a.log[e].val_ndcg10 == b.log[e].val_ndcg10);
    }
}

TEST_CASE("training improves validation ranking over the untrained model") {
    Toy toy(21, 20, 40, 4);
    auto split = split_leave_last_two(toy.ds.instances, {.min_records = 5});
    IedrModel model(toy.ds.vocab.size(), small_model(21));
    auto opt = small_options(21);
    opt.epochs = 6;
    opt.batch_size = 64;
    Trainer trainer(model, opt);
    const double before =
        evaluate(model, split.valid, toy.catalog, toy.history, opt.eval).ndcg10;
    RngStream rng(22, "aug");
    auto train = augment_with_negatives(split.train, toy.catalog, 2, rng);
    auto result = trainer.fit(train, split.valid, toy.catalog, toy.history);
    CHECK(result.best_val_ndcg10 > before);
}
