#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "imba_lens/errors.hpp"
#include "imba_lens/rng.hpp"
#include "imba_lens/tensor_io.hpp"
#include "test_helpers.hpp"

using namespace imba;
using namespace imba::io;
using imba::testing::TempDir;

namespace {

std::vector<std::byte> bytes_of(std::initializer_list<int> v) {
    std::vector<std::byte> out;
    for (int b : v) out.push_back(static_cast<std::byte>(b));
    return out;
}

std::vector<std::byte> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

Manifest two_class_manifest() {
    Manifest m;
    m.layer = {2, 4, 4};
    m.image_width = 64;
    m.image_height = 32;
    m.class_names = {"Atelectasis", "Nodule"};
    m.entries.push_back({"img1.png", "f1.fmap", "l1.fmap", {1, 0}});
    m.entries.push_back({"img2.png", "f2.fmap", "l2.fmap", {0, 1}});
    return m;
}

}  // namespace

TEST_CASE("2x2 tensor encodes to header plus little-endian payload") {
    const Tensor t({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    const auto bytes = encode_tensor(t);
    REQUIRE(bytes.size() == 8 + 2 * 4 + 16);
    const auto header = bytes_of({'F', 'M', 'A', 'P', 1, 1, 2, 0, 2, 0, 0, 0, 2, 0, 0, 0});
    CHECK(std::equal(header.begin(), header.end(), bytes.begin()));
    // 1.0f = 0x3f800000, 2.0f = 0x40000000, 3.0f = 0x40400000, 4.0f = 0x40800000
    const auto payload = bytes_of({0, 0, 0x80, 0x3f, 0, 0, 0, 0x40, 0, 0, 0x40, 0x40, 0, 0, 0x80, 0x40});
    CHECK(std::equal(payload.begin(), payload.end(), bytes.begin() + 16));
}

TEST_CASE("handcrafted scalar file decodes") {
    const auto bytes = bytes_of({'F', 'M', 'A', 'P', 1, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0xe0, 0x40});
    const auto t = decode_tensor(bytes);
    CHECK(t.dims == std::vector<std::size_t>{1});
    REQUIRE(t.data.size() == 1);
    CHECK(t.data[0] == 7.0f);
}

TEST_CASE("decode rejects malformed files") {
    auto good = encode_tensor(Tensor({3}, {1, 2, 3}));

    SUBCASE("truncated payload") {
        good.pop_back();
        CHECK_THROWS_AS(decode_tensor(good), DataError);
    }
    SUBCASE("trailing bytes") {
        good.push_back(std::byte{0});
        CHECK_THROWS_AS(decode_tensor(good), DataError);
    }
    SUBCASE("bad magic") {
        good[0] = std::byte{'X'};
        CHECK_THROWS_WITH_AS(decode_tensor(good), doctest::Contains("magic"), DataError);
    }
    SUBCASE("unsupported dtype") {
        good[5] = std::byte{2};
        CHECK_THROWS_WITH_AS(decode_tensor(good), doctest::Contains("dtype"), DataError);
    }
    SUBCASE("unsupported version") {
        good[4] = std::byte{9};
        CHECK_THROWS_AS(decode_tensor(good), DataError);
    }
    SUBCASE("rank out of range") {
        good[6] = std::byte{5};
        CHECK_THROWS_AS(decode_tensor(good), DataError);
    }
    SUBCASE("zero extent") {
        good[8] = std::byte{0};
        CHECK_THROWS_AS(decode_tensor(good), DataError);
    }
    SUBCASE("header only") {
        good.resize(6);
        CHECK_THROWS_AS(decode_tensor(good), DataError);
    }
}

TEST_CASE("encode rejects invalid shapes") {
    CHECK_THROWS_AS(encode_tensor(Tensor({2, 0}, {})), DataError);
    CHECK_THROWS_AS(encode_tensor(Tensor({}, {})), DataError);
    CHECK_THROWS_AS(encode_tensor(Tensor({1, 1, 1, 1, 1}, {1})), DataError);
    CHECK_THROWS_AS(encode_tensor(Tensor({3}, {1, 2})), DataError);
    CHECK_THROWS_AS(encode_tensor(Tensor({std::size_t{1} << 33}, {})), DataError);
}

TEST_CASE("write/read round trip is bit exact for every rank") {
    TempDir dir;
    Rng rng(7);
    for (std::size_t rank = 1; rank <= kMaxRank; ++rank) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::size_t> dims(rank);
            for (auto& d : dims) d = static_cast<std::size_t>(rng.between(1, 5));
            Tensor t = Tensor::zeros(dims);
            // Arbitrary bit patterns, including NaN payloads, subnormals, -0.
            for (auto& v : t.data) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()));
            const auto path = dir / ("t" + std::to_string(rank) + "_" + std::to_string(trial) + ".fmap");
            write_tensor(t, path);
            const auto back = read_tensor(path);
            REQUIRE(back.dims == t.dims);
            for (std::size_t i = 0; i < t.size(); ++i) {
                REQUIRE(std::bit_cast<std::uint32_t>(back.data[i]) == std::bit_cast<std::uint32_t>(t.data[i]));
            }
            CHECK(read_file(path) == encode_tensor(t));
        }
    }
}

TEST_CASE("read_tensor on a missing file fails") {
    TempDir dir;
    CHECK_THROWS_AS(read_tensor(dir / "nope.fmap"), DataError);
}

TEST_CASE("manifest parses and validates tensor shapes") {
    TempDir dir;
    auto m = two_class_manifest();
    write_tensor(Tensor::zeros({2, 4, 4}), dir / "f1.fmap");
    write_tensor(Tensor::zeros({2, 4, 4}), dir / "f2.fmap");
    write_tensor(Tensor({2}, {0.5f, -1.0f}), dir / "l1.fmap");
    write_tensor(Tensor({2}, {0.0f, 2.0f}), dir / "l2.fmap");
    write_manifest(m, dir / "manifest.json");

    const auto loaded = load_manifest(dir / "manifest.json");
    CHECK(loaded.layer == LayerShape{2, 4, 4});
    CHECK(loaded.num_classes() == 2);
    REQUIRE(loaded.entries.size() == 2);
    CHECK(loaded.entries[1].labels == std::vector<std::uint8_t>{0, 1});
    CHECK(loaded.entries[0].features == dir / "f1.fmap");
    CHECK(load_logits(loaded, loaded.entries[0]) == std::vector<float>{0.5f, -1.0f});

    SUBCASE("feature shape disagreeing with layer_shape is rejected") {
        write_tensor(Tensor::zeros({2, 4, 5}), dir / "f2.fmap");
        CHECK_THROWS_WITH_AS(load_manifest(dir / "manifest.json"), doctest::Contains("layer_shape"), DataError);
    }
    SUBCASE("logits with wrong length are rejected") {
        write_tensor(Tensor({3}, {0, 0, 0}), dir / "l2.fmap");
        CHECK_THROWS_AS(load_manifest(dir / "manifest.json"), DataError);
    }
    SUBCASE("missing tensor file is rejected") {
        std::filesystem::remove(dir / "f1.fmap");
        CHECK_THROWS_AS(load_manifest(dir / "manifest.json"), DataError);
    }
}

TEST_CASE("manifest field validation") {
    const auto base = std::filesystem::path("/tmp");
    const std::string ok = R"({"layer_shape":[1,2,2],"image_width":4,"image_height":4,"class_names":["A"],
        "entries":[{"image_id":"i","features":"f","logits":"l","labels":[1]}]})";
    CHECK_NOTHROW(parse_manifest(ok, base));
    CHECK_THROWS_AS(parse_manifest("{", base), DataError);
    CHECK_THROWS_AS(parse_manifest(R"({"layer_shape":[1,2],"image_width":4,"image_height":4,"class_names":["A"],"entries":[]})", base), DataError);
    CHECK_THROWS_AS(parse_manifest(R"({"layer_shape":[1,2,2],"image_width":4,"image_height":4,"class_names":[],"entries":[]})", base), DataError);
    CHECK_THROWS_AS(parse_manifest(R"({"layer_shape":[1,2,2],"image_width":4,"image_height":4,"class_names":["A"],
        "entries":[{"image_id":"i","features":"f","logits":"l","labels":[1,0]}]})", base), DataError);
    CHECK_THROWS_AS(parse_manifest(R"({"layer_shape":[1,2,2],"image_width":4,"image_height":4,"class_names":["A"],
        "entries":[{"image_id":"i","features":"f","logits":"l","labels":[2]}]})", base), DataError);
    CHECK_THROWS_AS(parse_manifest(R"({"layer_shape":[1,0,2],"image_width":4,"image_height":4,"class_names":["A"],"entries":[]})", base), DataError);
}

TEST_CASE("annotation CSV parsing") {
    const auto m = two_class_manifest();

    SUBCASE("single row") {
        std::istringstream in("image_id,label,x,y,w,h\nimg1.png,Atelectasis,10,20,5,6\n");
        const auto a = parse_annotations(in, m);
        REQUIRE(a.image_count() == 1);
        const auto* boxes = a.find("img1.png");
        REQUIRE(boxes);
        REQUIRE(boxes->size() == 1);
        CHECK((*boxes)[0].label == "Atelectasis");
        CHECK((*boxes)[0].x == 10);
        CHECK((*boxes)[0].y == 20);
        CHECK((*boxes)[0].w == 5);
        CHECK((*boxes)[0].h == 6);
    }
    SUBCASE("empty body gives an empty set") {
        std::istringstream in("image_id,label,x,y,w,h\n");
        CHECK(parse_annotations(in, m).empty());
    }
    SUBCASE("CRLF and fractional coordinates") {
        std::istringstream in("image_id,label,x,y,w,h\r\nimg2.png,Nodule,1.5,2.25,3,4\r\n");
        const auto a = parse_annotations(in, m);
        CHECK(a.find("img2.png")->at(0).y == 2.25);
    }
    SUBCASE("zero width is rejected") {
        std::istringstream in("image_id,label,x,y,w,h\nimg1.png,Atelectasis,1,1,0,6\n");
        CHECK_THROWS_AS(parse_annotations(in, m), DataError);
    }
    SUBCASE("unknown label is rejected") {
        std::istringstream in("image_id,label,x,y,w,h\nimg1.png,Hernia,1,1,2,2\n");
        CHECK_THROWS_WITH_AS(parse_annotations(in, m), doctest::Contains("Hernia"), DataError);
    }
    SUBCASE("wrong column count") {
        std::istringstream in("image_id,label,x,y,w,h\nimg1.png,Nodule,1,1,2\n");
        CHECK_THROWS_AS(parse_annotations(in, m), DataError);
    }
    SUBCASE("non-numeric coordinate") {
        std::istringstream in("image_id,label,x,y,w,h\nimg1.png,Nodule,1,abc,2,2\n");
        CHECK_THROWS_AS(parse_annotations(in, m), DataError);
    }
    SUBCASE("missing or wrong header") {
        std::istringstream none("");
        CHECK_THROWS_AS(parse_annotations(none, m), DataError);
        std::istringstream wrong("id,label,x,y,w,h\n");
        CHECK_THROWS_AS(parse_annotations(wrong, m), DataError);
    }
    SUBCASE("rows for images outside the manifest are skipped") {
        std::istringstream in("image_id,label,x,y,w,h\nother.png,Nodule,1,1,2,2\n");
        CHECK(parse_annotations(in, m).empty());
    }
    SUBCASE("box entirely outside the image is rejected") {
        std::istringstream in("image_id,label,x,y,w,h\nimg1.png,Nodule,70,1,2,2\n");
        CHECK_THROWS_AS(parse_annotations(in, m), DataError);
    }
}

TEST_CASE("clipping keeps every box inside the image") {
    const auto m = two_class_manifest();
    Rng rng(11);
    std::ostringstream csv;
    csv << "image_id,label,x,y,w,h\n";
    for (int i = 0; i < 300; ++i) {
        // boxes overlapping the image but possibly overrunning any edge
        const double x = rng.uniform(-20.0, 60.0);
        const double y = rng.uniform(-20.0, 28.0);
        const double w = rng.uniform(std::max(0.5, 1.0 - x), 80.0);
        const double h = rng.uniform(std::max(0.5, 1.0 - y), 50.0);
        csv << (i % 2 ? "img1.png" : "img2.png") << ',' << (i % 3 ? "Nodule" : "Atelectasis") << ',' << x << ',' << y
            << ',' << w << ',' << h << '\n';
    }
    std::istringstream in(csv.str());
    const auto a = parse_annotations(in, m);
    std::size_t n = 0;
    for (const auto& [id, boxes] : a.boxes) {
        for (const auto& b : boxes) {
            ++n;
            CHECK(b.x >= 0);
            CHECK(b.y >= 0);
            CHECK(b.w > 0);
            CHECK(b.h > 0);
            CHECK(b.x + b.w <= 64.0);
            CHECK(b.y + b.h <= 32.0);
        }
    }
    CHECK(n == 300);
}
