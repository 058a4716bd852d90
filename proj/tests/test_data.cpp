#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "imsat/data.hpp"
#include "imsat/errors.hpp"

using imsat::Dataset;

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

// Two 2x2 images plus matching labels in the IDX byte layout.
void write_tiny_idx(const std::string& img_path, const std::string& lbl_path) {
    std::ofstream img(img_path, std::ios::binary);
    put_be32(img, 0x803);
    put_be32(img, 2);  // images
    put_be32(img, 2);  // rows
    put_be32(img, 2);  // cols
    const unsigned char pixels[8] = {0, 255, 128, 64, 10, 20, 30, 40};
    img.write(reinterpret_cast<const char*>(pixels), 8);
    img.close();

    std::ofstream lbl(lbl_path, std::ios::binary);
    put_be32(lbl, 0x801);
    put_be32(lbl, 2);
    const unsigned char labels[2] = {1, 0};
    lbl.write(reinterpret_cast<const char*>(labels), 2);
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("IDX loading maps bytes onto [-1,1] and keeps shape") {
    TempFile img("/tmp/imsat_test_images.idx"), lbl("/tmp/imsat_test_labels.idx");
    write_tiny_idx(img.path, lbl.path);

    Dataset d = imsat::load_idx(img.path, lbl.path);
    CHECK(d.size() == 2);
    CHECK(d.dim() == 4);
    CHECK(d.image_h == 2);
    CHECK(d.image_w == 2);
    CHECK(d.has_labels);
    REQUIRE(d.labels.ids.size() == 2);
    CHECK(d.labels.ids[0] == 1);
    CHECK(d.labels.ids[1] == 0);
    CHECK(d.labels.classes == 2);

    CHECK(d.features(0, 0) == doctest::Approx(-1.0));
    CHECK(d.features(0, 1) == doctest::Approx(1.0));
    CHECK(d.features(0, 2) == doctest::Approx(2.0 * 128.0 / 255.0 - 1.0));  // ~0.003922
    CHECK(d.features(0, 3) == doctest::Approx(2.0 * 64.0 / 255.0 - 1.0));
}

TEST_CASE("IDX errors carry context") {
    TempFile img("/tmp/imsat_bad.idx");
    {
        std::ofstream out(img.path, std::ios::binary);
        put_be32(out, 0x12345678);
    }
    CHECK_THROWS_AS(imsat::load_idx(img.path), imsat::FormatError);

    {
        std::ofstream out(img.path, std::ios::binary);
        put_be32(out, 0x803);
        put_be32(out, 5);
        put_be32(out, 2);
        put_be32(out, 2);
        out.put(static_cast<char>(9));  // far too few pixels
    }
    CHECK_THROWS_AS(imsat::load_idx(img.path), imsat::FormatError);
    CHECK_THROWS_AS(imsat::load_idx("/tmp/no_such_file.idx"), imsat::InputError);
}

TEST_CASE("CSV round trip preserves values and labels") {
    TempFile csv("/tmp/imsat_test.csv");
    Dataset d;
    d.name = "t";
    d.features = imsat::Matrix(2, 2);
    d.features(0, 0) = 0.1234567890123456;
    d.features(0, 1) = -7.5;
    d.features(1, 0) = 1e-17;
    d.features(1, 1) = 3.0;
    d.has_labels = true;
    d.labels.ids = {1, 0};
    d.labels.classes = 2;

    imsat::save_csv(csv.path, d);
    Dataset back = imsat::load_csv(csv.path, 2);
    REQUIRE(back.size() == 2);
    REQUIRE(back.dim() == 2);
    CHECK(back.features(0, 0) == d.features(0, 0));
    CHECK(back.features(1, 0) == d.features(1, 0));
    CHECK(back.labels.ids == d.labels.ids);
}

TEST_CASE("CSV parse errors name the offending row") {
    TempFile csv("/tmp/imsat_bad.csv");
    {
        std::ofstream out(csv.path);
        out << "1,2\n3\n";
    }
    try {
        imsat::load_csv(csv.path);
        FAIL("expected FormatError");
    } catch (const imsat::FormatError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }

    {
        std::ofstream out(csv.path);
        out << "1,abc\n";
    }
    CHECK_THROWS_AS(imsat::load_csv(csv.path), imsat::FormatError);

    {
        std::ofstream out(csv.path);
        out << "1,2.5\n";  // label column must hold integers
    }
    CHECK_THROWS_AS(imsat::load_csv(csv.path, 1), imsat::FormatError);

    {
        std::ofstream out(csv.path);
    }
    CHECK_THROWS_AS(imsat::load_csv(csv.path), imsat::FormatError);
}

TEST_CASE("native dataset container round trips everything") {
    TempFile bin("/tmp/imsat_test.bin");
    Dataset d = imsat::gen_blobs(3, 5, 4, 2.0, 0.1, 9);
    d.image_h = 2;
    d.image_w = 2;
    imsat::save_dataset(bin.path, d);
    Dataset back = imsat::load_dataset(bin.path);
    CHECK(back.size() == d.size());
    CHECK(back.dim() == d.dim());
    CHECK(back.image_h == 2);
    CHECK(back.image_w == 2);
    CHECK(back.has_labels);
    CHECK(back.labels.ids == d.labels.ids);
    CHECK(back.labels.classes == d.labels.classes);
    for (std::size_t i = 0; i < d.features.size(); ++i)
        CHECK(back.features.data[i] == d.features.data[i]);
}

TEST_CASE("spiral generator: balance, determinism, noiseless residual") {
    Dataset d = imsat::gen_spiral();
    CHECK(d.size() == 900);
    CHECK(d.dim() == 2);
    std::vector<int> counts(3, 0);
    for (int id : d.labels.ids) counts[static_cast<std::size_t>(id)]++;
    CHECK(counts[0] == 300);
    CHECK(counts[1] == 300);
    CHECK(counts[2] == 300);

    Dataset again = imsat::gen_spiral();
    CHECK(again.features.data == d.features.data);

    // With zero noise every point must sit exactly on its parametric curve.
    Dataset clean = imsat::gen_spiral(3, 50, 0.0, 1);
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const std::size_t a = static_cast<std::size_t>(clean.labels.ids[i]);
        const std::size_t k = i % 50;
        const double phi = 1.25 * two_pi * static_cast<double>(k) / 50.0;
        const double rho = phi / (1.25 * two_pi);
        const double ang = phi + two_pi * static_cast<double>(a) / 3.0;
        CHECK(std::abs(clean.features(i, 0) - rho * std::cos(ang)) < 1e-12);
        CHECK(std::abs(clean.features(i, 1) - rho * std::sin(ang)) < 1e-12);
    }

    CHECK_THROWS_AS(imsat::gen_spiral(1, 10, 0.0, 0), imsat::ConfigError);
}

TEST_CASE("blob generator: centers respect separation") {
    Dataset d = imsat::gen_blobs(4, 50, 2, 10.0, 0.5, 1);
    CHECK(d.size() == 200);
    CHECK(d.labels.classes == 4);

    // Class means approximate the centers; check mutual distance.
    std::vector<std::vector<double>> mean(4, std::vector<double>(2, 0.0));
    std::vector<int> n(4, 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto c = static_cast<std::size_t>(d.labels.ids[i]);
        mean[c][0] += d.features(i, 0);
        mean[c][1] += d.features(i, 1);
        n[c]++;
    }
    for (std::size_t c = 0; c < 4; ++c) {
        mean[c][0] /= n[c];
        mean[c][1] /= n[c];
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) {
            const double dx = mean[a][0] - mean[b][0];
            const double dy = mean[a][1] - mean[b][1];
            CHECK(std::sqrt(dx * dx + dy * dy) > 10.0 - 1.0);
        }

    Dataset again = imsat::gen_blobs(4, 50, 2, 10.0, 0.5, 1);
    CHECK(again.features.data == d.features.data);

    CHECK_THROWS_AS(imsat::gen_blobs(2, 10, 2, -1.0, 0.1, 0), imsat::ConfigError);
    CHECK_THROWS_AS(imsat::gen_blobs(0, 10, 2, 1.0, 0.1, 0), imsat::ConfigError);
}

TEST_CASE("fingerprint tracks content") {
    Dataset d = imsat::gen_blobs(2, 10, 2, 5.0, 0.2, 3);
    const std::uint64_t f1 = imsat::dataset_fingerprint(d);
    CHECK(f1 == imsat::dataset_fingerprint(d));
    d.features(0, 0) += 1e-9;
    CHECK(imsat::dataset_fingerprint(d) != f1);
}
