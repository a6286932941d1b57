#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <iedr/checkpoint.hpp>
#include <iedr/model.hpp>

using namespace iedr;

namespace {

ModelConfig tiny(std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.encoder.embed_dim = 4;
    cfg.encoder.hidden_dim = 5;
    cfg.factors.hidden_dim = 5;
    cfg.q_hidden = 5;
    cfg.seed = seed;
    return cfg;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("model initialization is deterministic in the seed") {
    IedrModel a(20, tiny(5)), b(20, tiny(5)), c(20, tiny(6));
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        if (a.params().all()[i].value.tensor().data != b.params().all()[i].value.tensor().data)
            all_equal = false;
        if (a.params().all()[i].value.tensor().data != c.params().all()[i].value.tensor().data)
            any_diff = true;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("parameters split exhaustively into theta and omega groups") {
    IedrModel model(20, tiny());
    auto theta = model.params().group(Group::theta);
    auto omega = model.params().group(Group::omega);
    CHECK(theta.size() + omega.size() == model.params().size());
    // The four variational heads, two layers with weight and bias each.
    CHECK(theta.size() == 16);
    for (auto* p : theta) CHECK(p->name.substr(0, 1) == "q");
}

TEST_CASE("checkpoint round-trip restores every parameter") {
    auto dir = temp_dir("iedr_ckpt");
    IedrModel model(20, tiny());
    auto original = model.params().snapshot();
    save_checkpoint(dir, model.params(), "cfg123");

    for (auto& p : model.params().all())
        for (auto& v : p.value.tensor().data) v += 1.5;
    auto hash = load_checkpoint(dir, model.params());
    CHECK(hash == "cfg123");
    auto restored = model.params().snapshot();
    for (std::size_t i = 0; i < original.size(); ++i)
        CHECK(restored[i].data == original[i].data);
}

TEST_CASE("checkpoint load rejects a mismatched model") {
    auto dir = temp_dir("iedr_ckpt_mismatch");
    IedrModel model(20, tiny());
    save_checkpoint(dir, model.params(), "h");

    auto other_cfg = tiny();
    other_cfg.encoder.embed_dim = 6;
    IedrModel other(20, other_cfg);
    CHECK_THROWS_WITH(load_checkpoint(dir, other.params()),
                      Catch::Matchers::ContainsSubstring("shape mismatch"));
}

TEST_CASE("checkpoint load rejects a wrong format version") {
    auto dir = temp_dir("iedr_ckpt_version");
    IedrModel model(20, tiny());
    save_checkpoint(dir, model.params(), "h");
    auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(in);
    in.close();
    manifest["format_version"] = 99;
    std::ofstream out(manifest_path, std::ios::trunc);
    out << manifest.dump();
    out.close();
    CHECK_THROWS_WITH(load_checkpoint(dir, model.params()),
                      Catch::Matchers::ContainsSubstring("version"));
}

TEST_CASE("checkpoint files are byte-identical across saves") {
    auto d1 = temp_dir("iedr_ckpt_a");
    auto d2 = temp_dir("iedr_ckpt_b");
    IedrModel model(20, tiny());
    save_checkpoint(d1, model.params(), "h");
    save_checkpoint(d2, model.params(), "h");
    for (const auto& entry : std::filesystem::directory_iterator(d1)) {
        std::ifstream a(entry.path(), std::ios::binary);
        std::ifstream b(d2 / entry.path().filename(), std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
}
