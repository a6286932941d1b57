#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <iedr/data.hpp>

using namespace iedr;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

const char* kToy =
    "1\tu1\ti1\t10\tuser:u1\titem:i1,cat:games\tdaytime:morning\n"
    "1\tu1\ti2\t20\tuser:u1\titem:i2,cat:tools\tdaytime:evening\n"
    "1\tu2\ti1\t15\tuser:u2\titem:i1,cat:games\tdaytime:morning\n";

} // namespace

TEST_CASE("ingest builds instances and vocabulary from a toy file") {
    auto path = write_temp("iedr_toy.tsv", kToy);
    auto [vocab, instances] = ingest_tsv(path);
    REQUIRE(instances.size() == 3);
    // distinct field:value pairs: user{u1,u2} item{i1,i2} cat{games,tools}
    // daytime{morning,evening} = 8, plus one UNK per field (4).
    CHECK(vocab.size() == 12);
    CHECK(instances[0].user_key == "u1");
    CHECK(instances[0].item_feats.size() == 2);
    CHECK(instances[2].user_feats == std::vector<std::size_t>{vocab.lookup("user", "u2",
                                                                           FieldGroup::user)});
}

TEST_CASE("empty file ingests to nothing") {
    auto path = write_temp("iedr_empty.tsv", "");
    auto [vocab, instances] = ingest_tsv(path);
    CHECK(instances.empty());
    CHECK(vocab.size() == 0);
}

TEST_CASE("malformed line is rejected with its line number") {
    auto path = write_temp("iedr_bad.tsv", "1\tu1\ti1\t10\tuser:u1\titem:i1\tdaytime:am\n"
                                           "1\tu1\tbroken\n");
    CHECK_THROWS_WITH(ingest_tsv(path), Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("feature in the wrong field group is rejected") {
    auto path = write_temp("iedr_group.tsv",
                           "1\tu1\ti1\t10\tuser:u1\titem:i1\tuser:u1\n");
    CHECK_THROWS_WITH(ingest_tsv(path), Catch::Matchers::ContainsSubstring("group"));
}

TEST_CASE("unknown features in later files map to the field UNK index") {
    auto path = write_temp("iedr_toy2.tsv", kToy);
    auto [vocab, instances] = ingest_tsv(path);
    auto path2 = write_temp("iedr_new.tsv",
                            "1\tu9\ti1\t5\tuser:u9\titem:i1,cat:games\tdaytime:morning\n");
    auto [vocab2, later] = ingest_tsv(path2, vocab);
    REQUIRE(later.size() == 1);
    CHECK(later[0].user_feats[0] ==
          vocab2.lookup("user", Vocabulary::kUnk, FieldGroup::user));
}

TEST_CASE("ingestion round-trip") {
    auto path = write_temp("iedr_rt1.tsv", kToy);
    auto [vocab, instances] = ingest_tsv(path);
    auto out = write_temp("iedr_rt2.tsv", "");
    write_tsv(out, instances, vocab);
    auto [vocab2, instances2] = ingest_tsv(out);
    CHECK(instances2 == instances);
    REQUIRE(vocab2.size() == vocab.size());
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        CHECK(vocab2.entry(i).field == vocab.entry(i).field);
        CHECK(vocab2.entry(i).value == vocab.entry(i).value);
    }
}

TEST_CASE("vocabulary sidecar round-trip") {
    auto path = write_temp("iedr_voc.tsv", kToy);
    auto [vocab, _] = ingest_tsv(path);
    auto vpath = write_temp("iedr_voc.txt", "");
    vocab.save(vpath);
    auto vocab2 = Vocabulary::load(vpath);
    REQUIRE(vocab2.size() == vocab.size());
    CHECK(vocab2.lookup("cat", "tools", FieldGroup::item) ==
          vocab.lookup("cat", "tools", FieldGroup::item));
}

namespace {

std::vector<Instance> user_records(const std::string& user, std::size_t n) {
    std::vector<Instance> out;
    for (std::size_t k = 0; k < n; ++k) {
        Instance inst;
        inst.user_key = user;
        inst.item_key = "i" + std::to_string(k);
        inst.order_key = static_cast<long long>(k);
        inst.user_feats = {0};
        inst.item_feats = {k};
        inst.context_feats = {0};
        out.push_back(inst);
    }
    return out;
}

} // namespace

TEST_CASE("leave-last-two split") {
    SECTION("user with 5 records contributes 3/1/1") {
        auto recs = user_records("u1", 5);
        auto split = split_leave_last_two(recs, {.min_records = 5});
        CHECK(split.train.size() == 3);
        CHECK(split.valid.size() == 1);
        CHECK(split.test.size() == 1);
        CHECK(split.test[0].order_key == 4);
        CHECK(split.valid[0].order_key == 3);
    }
    SECTION("user below min_records contributes nothing") {
        auto recs = user_records("u1", 4);
        auto split = split_leave_last_two(recs, {.min_records = 5});
        CHECK(split.train.empty());
        CHECK(split.valid.empty());
        CHECK(split.test.empty());
    }
    SECTION("splits are pairwise disjoint by (user, order)") {
        std::vector<Instance> recs;
        for (int u = 0; u < 4; ++u) {
            auto r = user_records("u" + std::to_string(u), 5 + static_cast<std::size_t>(u));
            recs.insert(recs.end(), r.begin(), r.end());
        }
        auto split = split_leave_last_two(recs, {.min_records = 5});
        auto key = [](const Instance& i) { return i.user_key + "#" + std::to_string(i.order_key); };
        std::unordered_set<std::string> seen;
        for (const auto* part : {&split.train, &split.valid, &split.test})
            for (const auto& inst : *part) CHECK(seen.insert(key(inst)).second);
        CHECK(seen.size() == recs.size());
    }
}

TEST_CASE("train negative sampling") {
    auto recs = user_records("u1", 10);
    ItemCatalog catalog(recs);
    RngStream rng(3, "neg");

    SECTION("k negatives share user and context, differ in item") {
        auto negs = sample_train_negatives(recs[0], catalog, 2, rng);
        REQUIRE(negs.size() == 2);
        for (const auto& n : negs) {
            CHECK(n.label == 0);
            CHECK(n.user_key == recs[0].user_key);
            CHECK(n.context_feats == recs[0].context_feats);
            CHECK(n.item_key != recs[0].item_key);
        }
    }
    SECTION("two-item catalog forces the other item") {
        auto two = user_records("u1", 2);
        ItemCatalog cat2(two);
        auto negs = sample_train_negatives(two[0], cat2, 1, rng);
        REQUIRE(negs.size() == 1);
        CHECK(negs[0].item_key == two[1].item_key);
    }
    SECTION("singleton catalog rejected") {
        auto one = user_records("u1", 1);
        ItemCatalog cat1(one);
        CHECK_THROWS(sample_train_negatives(one[0], cat1, 1, rng));
    }
    SECTION("sampled items are near-uniform over the catalog") {
        auto recs100 = user_records("u1", 100);
        ItemCatalog cat100(recs100);
        std::vector<std::size_t> freq(100, 0);
        const std::size_t draws = 100000;
        Instance pos = recs100[0];
        for (std::size_t k = 0; k < draws; ++k) {
            auto negs = sample_train_negatives(pos, cat100, 1, rng);
            ++freq[cat100.index_of(negs[0].item_key)];
        }
        const double expected = static_cast<double>(draws) / 99.0;
        CHECK(freq[0] == 0); // the positive is never drawn
        for (std::size_t i = 1; i < 100; ++i) {
            CHECK(static_cast<double>(freq[i]) > expected * 0.9);
            CHECK(static_cast<double>(freq[i]) < expected * 1.1);
        }
    }
}

TEST_CASE("augmentation adds exactly k negatives per positive") {
    auto recs = user_records("u1", 20);
    ItemCatalog catalog(recs);
    RngStream rng(4, "neg");
    auto aug = augment_with_negatives(recs, catalog, 2, rng);
    REQUIRE(aug.size() == recs.size() * 3);
    for (std::size_t p = 0; p < recs.size(); ++p) {
        CHECK(aug[p * 3].label == 1);
        CHECK(aug[p * 3 + 1].label == 0);
        CHECK(aug[p * 3 + 2].label == 0);
    }
}

TEST_CASE("eval candidate sampling") {
    auto recs = user_records("u1", 100);
    ItemCatalog catalog(recs);

    SECTION("exactly 99 distinct non-positive items from a 100-item catalog") {
        RngStream rng(5, "eval");
        auto cands = sample_eval_candidates(recs[0], catalog, 99, rng);
        REQUIRE(cands.size() == 99);
        std::unordered_set<std::size_t> uniq(cands.begin(), cands.end());
        CHECK(uniq.size() == 99);
        CHECK(!uniq.count(catalog.index_of(recs[0].item_key)));
    }
    SECTION("fixed seed reproduces the candidate set") {
        RngStream r1(6, "eval"), r2(6, "eval");
        CHECK(sample_eval_candidates(recs[0], catalog, 50, r1) ==
              sample_eval_candidates(recs[0], catalog, 50, r2));
    }
    SECTION("exclusions shrink the pool") {
        RngStream rng(7, "eval");
        std::unordered_set<std::size_t> excl;
        for (std::size_t i = 2; i < 100; ++i) excl.insert(i);
        auto cands = sample_eval_candidates(recs[0], catalog, 99, rng, &excl);
        REQUIRE(cands.size() == 1);
        CHECK(cands[0] == 1);
    }
}

TEST_CASE("time bucketing is month-granular") {
    // 2014-03-05 and 2014-03-29 vs 2014-04-01 (UTC).
    CHECK(bucketize_time(1394006400) == bucketize_time(1396051200));
    CHECK(bucketize_time(1396310400) != bucketize_time(1396051200));
    CHECK(bucketize_time(1394006400) == "2014-03");
    CHECK(bucketize_time(1396310400) == "2014-04");
}
