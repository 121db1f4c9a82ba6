#include <doctest.h>

#include <random>

#include "resmt/emu.hpp"
#include "resmt/errors.hpp"
#include "resmt/obfuscator.hpp"
#include "support/corpus.hpp"

using namespace resmt;
using namespace resmt::test;
using obf::ObfConfig;
using obf::Technique;

namespace {

ObfConfig config_with(std::vector<Technique> ts, uint32_t iterations, uint64_t seed)
{
    ObfConfig c;
    c.techniques = std::move(ts);
    c.iterations = iterations;
    c.seed = seed;
    return c;
}

// EAX equality over a sample of inputs is the preservation signal.
void check_preserves(const FunctionImage& original, uint32_t entry,
                     const obf::ObfResult& variant, const Abi& abi, int samples,
                     uint64_t seed)
{
    std::mt19937_64 rng(seed);
    ExecLimits limits;
    limits.max_steps = 2000000;
    int bad = 0;
    for (int i = 0; i < samples && bad < 3; ++i) {
        uint32_t arg = i < 8 ? uint32_t(i) : uint32_t(rng());
        auto a = emu::run_concrete(original, entry, std::span(&arg, 1), abi, limits);
        auto b = emu::run_concrete(variant.image, variant.entry, std::span(&arg, 1),
                                   abi, limits);
        REQUIRE(a.status == emu::RunStatus::Returned);
        if (b.status != emu::RunStatus::Returned || a.eax != b.eax) {
            ++bad;
            CAPTURE(arg);
            CAPTURE(emu::run_status_name(b.status));
            CHECK_MESSAGE(false, "variant diverges from the original");
        }
    }
    CHECK(bad == 0);
}

} // namespace

TEST_CASE("config validation")
{
    FunctionImage img = check_key_image();
    CHECK_THROWS_AS(obf::obfuscate(img, 0, config_with({}, 1, 0)), Error);
    CHECK_THROWS_AS(
        obf::obfuscate(img, 0, config_with({Technique::JumpInsertion}, 0, 0)), Error);
}

TEST_CASE("jump insertion alone reproduces the first-tier shape")
{
    FunctionImage img = check_key_image();
    auto result = obf::obfuscate(img, 0, config_with({Technique::JumpInsertion}, 1, 7));

    size_t count = obf::linear_instruction_count(result.image);
    CHECK(count >= 9);
    CHECK(count <= 12);
    CHECK(result.image.size() >= 15);
    CHECK(result.image.size() <= 31);

    check_preserves(img, 0, result, Abi::stack(), 64, 1);
}

TEST_CASE("instruction count grows monotonically with iterations")
{
    FunctionImage img = check_key_image();
    size_t prev = obf::linear_instruction_count(img);
    for (uint32_t iters = 1; iters <= 5; ++iters) {
        auto result = obf::obfuscate(img, 0, config_with(ObfConfig::all(), iters, 11));
        size_t count = obf::linear_instruction_count(result.image);
        CAPTURE(iters);
        CHECK(count > prev);
        prev = count;
    }
}

TEST_CASE("deterministic under the seed")
{
    FunctionImage img = check_key_image();
    auto a = obf::obfuscate(img, 0, config_with(ObfConfig::all(), 3, 1234));
    auto b = obf::obfuscate(img, 0, config_with(ObfConfig::all(), 3, 1234));
    CHECK(a.image.bytes == b.image.bytes);
    CHECK(a.entry == b.entry);

    auto c = obf::obfuscate(img, 0, config_with(ObfConfig::all(), 3, 1235));
    CHECK(a.image.bytes != c.image.bytes); // overwhelmingly likely
}

TEST_CASE("each technique preserves semantics on its own")
{
    FunctionImage img = check_key_image();
    for (Technique t : ObfConfig::all()) {
        CAPTURE(obf::technique_name(t));
        auto result = obf::obfuscate(img, 0, config_with({t}, 2, 77));
        check_preserves(img, 0, result, Abi::stack(), 64, 2);
    }
}

TEST_CASE("stacked techniques preserve semantics over 256 inputs")
{
    FunctionImage img = check_key_image();
    for (uint64_t seed : {101, 202, 303}) {
        auto result = obf::obfuscate(img, 0, config_with(ObfConfig::all(), 3, seed));
        CAPTURE(seed);
        check_preserves(img, 0, result, Abi::stack(), 256, seed);
    }
}

TEST_CASE("byte-key function survives heavier stacking")
{
    FunctionImage img = byte_key_image();
    auto result = obf::obfuscate(img, img.base_addr, config_with(ObfConfig::all(), 4, 5));
    CHECK(obf::linear_instruction_count(result.image) > 60);
    check_preserves(img, img.base_addr, result, Abi::stack(), 128, 6);
}

TEST_CASE("relocated branches land on instruction boundaries")
{
    FunctionImage img = check_key_image();
    auto result = obf::obfuscate(img, 0, config_with(ObfConfig::all(), 3, 999));

    // Collect boundaries by linear decode, then check every branch target.
    std::vector<uint32_t> boundaries;
    uint32_t pc = result.image.base_addr;
    while (result.image.contains(pc)) {
        boundaries.push_back(pc);
        pc += x86::decode_one(result.image, pc).length;
    }
    auto is_boundary = [&](uint32_t a) {
        for (uint32_t b : boundaries)
            if (a == b)
                return true;
        return false;
    };
    for (uint32_t b : boundaries) {
        auto i = x86::decode_one(result.image, b);
        if (i.is_branch())
            CHECK(is_boundary(i.branch_target()));
    }
    CHECK(is_boundary(result.entry));
}

TEST_CASE("variants re-obfuscate cleanly")
{
    FunctionImage img = check_key_image();
    auto first = obf::obfuscate(img, 0, config_with(ObfConfig::all(), 2, 42));
    auto second =
        obf::obfuscate(first.image, first.entry, config_with(ObfConfig::all(), 1, 43));
    CHECK(obf::linear_instruction_count(second.image) >
          obf::linear_instruction_count(first.image));
    check_preserves(img, 0, second, Abi::stack(), 64, 44);
}
