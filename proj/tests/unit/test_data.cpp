// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <cstring>

#include "json.hpp"

#include "doctest.h"
#include "serdarts/data/audio.hpp"
#include "serdarts/data/container.hpp"
#include "serdarts/data/features.hpp"
#include "serdarts/data/folds.hpp"
#include "serdarts/data/synth.hpp"

using namespace serdarts;
using namespace serdarts::data;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "serdarts_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Utterance tone(double seconds, double hz, double rate = 16000.0) {
  Utterance u;
  u.sample_rate = rate;
  u.waveform.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < u.waveform.size(); ++i)
    u.waveform[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return u;
}

std::vector<SpectrogramRecord> random_records(std::size_t n, std::size_t speakers, RngState& rng) {
  std::vector<SpectrogramRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].label = static_cast<int>(rng.uniform_index(4));
    out[i].speaker = synth_speaker_name(i % speakers);
    out[i].features.resize(128 * 128);
    for (auto& v : out[i].features) v = static_cast<float>(rng.normal(0.0, 10.0));
  }
  return out;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("labels") {
  CHECK(class_names() == std::vector<std::string>{"happiness", "sadness", "anger", "neutral"});
  CHECK(parse_label("anger") == 2);
  CHECK(parse_label("3") == 3);
  CHECK_THROWS_AS(parse_label("fear"), Error);
  CHECK_THROWS_AS(parse_label("4"), Error);
  try {
    parse_label("fear");
  } catch (const Error& e) {
    const std::string msg = e.what();
    for (const auto& name : class_names()) CHECK(msg.find(name) != std::string::npos);
  }
}

TEST_CASE("pad or truncate") {
  SUBCASE("5 s is zero padded to 8 s") {
    Utterance u = tone(5.0, 440.0);
    REQUIRE(u.waveform.size() == 80000);
    Utterance p = pad_or_truncate(u);
    REQUIRE(p.waveform.size() == 128000);
    CHECK(std::equal(u.waveform.begin(), u.waveform.end(), p.waveform.begin()));
    CHECK(std::all_of(p.waveform.begin() + 80000, p.waveform.end(), [](double v) { return v == 0.0; }));
  }
  SUBCASE("8 s is unchanged") {
    Utterance u = tone(8.0, 300.0);
    CHECK(pad_or_truncate(u).waveform == u.waveform);
  }
  SUBCASE("10 s keeps the prefix") {
    Utterance u = tone(10.0, 300.0);
    Utterance p = pad_or_truncate(u);
    REQUIRE(p.waveform.size() == 128000);
    CHECK(std::equal(p.waveform.begin(), p.waveform.end(), u.waveform.begin()));
  }
  SUBCASE("errors") {
    Utterance empty;
    CHECK_THROWS_AS(pad_or_truncate(empty), Error);
    Utterance bad = tone(1.0, 100.0);
    bad.label = 4;
    CHECK_THROWS_AS(pad_or_truncate(bad), Error);
  }
}

TEST_CASE("mel scale and filterbank") {
  for (double hz : {0.0, 200.0, 999.0, 1000.0, 3000.0, 8000.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-12));
  CHECK(hz_to_mel(1000.0) == doctest::Approx(15.0));
  CHECK(hz_to_mel(6400.0) == doctest::Approx(42.0));
  MfccConfig cfg;
  const auto fb = mel_filterbank(cfg);
  const std::size_t bins = cfg.bins();
  REQUIRE(fb.size() == 128 * bins);
  std::vector<double> column(bins, 0.0);
  for (std::size_t m = 0; m < 128; ++m) {
    double sum = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      CHECK(fb[m * bins + b] >= 0.0);
      sum += fb[m * bins + b];
      column[b] += fb[m * bins + b];
    }
    CHECK(std::isfinite(sum));
    CHECK(sum > 0.0);
  }
  // supports tile the band: every bin strictly between 0 Hz and Nyquist is covered
  for (std::size_t b = 1; b + 1 < bins; ++b) CHECK(column[b] > 0.0);
  MfccConfig low = cfg;
  low.n_fft = 128;  // 65 bins cannot feed 128 bands
  CHECK_THROWS_AS(mel_filterbank(low), Error);
  CHECK_THROWS_AS(MfccExtractor{low}, Error);
}

TEST_CASE("orthonormal DCT") {
  RngState rng(5);
  std::vector<double> x(128 * 9);
  for (auto& v : x) v = rng.normal(-40.0, 20.0);
  const auto y = dct_ortho(x, 128, 9);
  const auto back = idct_ortho(y, 128, 9);
  double worst = 0, ex = 0, ey = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::abs(back[i] - x[i]));
    ex += x[i] * x[i];
    ey += y[i] * y[i];
  }
  CHECK(worst <= 1e-6);
  CHECK(ey == doctest::Approx(ex).epsilon(1e-12));  // Parseval
  // constant column -> only the DC coefficient, equal to sqrt(n) * value
  std::vector<double> c(16, 2.0);
  const auto d = dct_ortho(c, 16, 1);
  CHECK(d[0] == doctest::Approx(8.0));
  for (std::size_t k = 1; k < 16; ++k) CHECK(std::abs(d[k]) < 1e-12);
  CHECK_THROWS_AS(dct_ortho(c, 15, 1), ShapeError);
}

TEST_CASE("mfcc shapes and properties") {
  MfccExtractor ex;
  CHECK(ex.stft_frames(128000) == 513);
  SUBCASE("8 s input gives 128 x 512 then 128 x 128") {
    Utterance u = pad_or_truncate(tone(6.3, 523.0));
    Tensor<float> m = ex.mfcc(u);
    CHECK(m.shape() == Shape{128, 512});
    for (float v : m.data()) CHECK(std::isfinite(v));
    Tensor<float> d = downsample_time(m);
    CHECK(d.shape() == Shape{128, 128});
    SUBCASE("deterministic") {
      Tensor<float> again = ex.mfcc(u);
      CHECK(std::equal(m.data().begin(), m.data().end(), again.data().begin()));
    }
  }
  SUBCASE("silence gives constant columns") {
    Utterance u;
    u.waveform.assign(128000, 0.0);
    Tensor<float> m = ex.mfcc(u);
    for (std::size_t r = 0; r < 128; ++r)
      for (std::size_t c = 1; c < 512; ++c) CHECK(m.data()[r * 512 + c] == m.data()[r * 512]);
    // log floor -100 dB in every band: only the DC coefficient survives
    CHECK(m.data()[0] == doctest::Approx(-100.0 * std::sqrt(128.0)).epsilon(1e-6));
  }
  SUBCASE("log mel inverts through the DCT") {
    Utterance u = pad_or_truncate(tone(8.0, 1200.0));
    const auto lm = ex.log_mel(u.waveform);
    const std::size_t frames = ex.stft_frames(u.waveform.size());
    const auto back = idct_ortho(dct_ortho(lm, 128, frames), 128, frames);
    double worst = 0;
    for (std::size_t i = 0; i < lm.size(); ++i) worst = std::max(worst, std::abs(back[i] - lm[i]));
    CHECK(worst <= 1e-6);
  }
  SUBCASE("a pure tone peaks in the band holding its frequency") {
    Utterance u = pad_or_truncate(tone(8.0, 2000.0));
    const auto lm = ex.log_mel(u.waveform);
    const std::size_t frames = ex.stft_frames(u.waveform.size()), t = frames / 2;
    std::size_t best = 0;
    for (std::size_t m = 1; m < 128; ++m)
      if (lm[m * frames + t] > lm[best * frames + t]) best = m;
    const double top = hz_to_mel(8000.0);
    const double lo = mel_to_hz(top * static_cast<double>(best) / 129.0);
    const double hi = mel_to_hz(top * static_cast<double>(best + 2) / 129.0);
    CHECK(lo < 2000.0);
    CHECK(hi > 2000.0);
  }
  SUBCASE("short input is zero padded in time") {
    Utterance u = tone(1.0, 440.0);
    Tensor<float> m = ex.mfcc(u);
    CHECK(m.shape() == Shape{128, 512});
    CHECK(m.data()[511] == 0.0f);
  }
  SUBCASE("mismatched rate is rejected") {
    Utterance u = tone(8.0, 440.0, 22050.0);
    CHECK_THROWS_AS(ex.mfcc(u), Error);
  }
}

TEST_CASE("time downsampling") {
  Tensor<float> constant({128, 512}, 3.5f);
  Tensor<float> d = downsample_time(constant);
  CHECK(d.shape() == Shape{128, 128});
  for (float v : d.data()) CHECK(v == 3.5f);
  Tensor<float> groups({128, 512});
  for (std::size_t r = 0; r < 128; ++r)
    for (std::size_t c = 0; c < 512; ++c) groups.data()[r * 512 + c] = static_cast<float>(c % 4 + 1);
  const Tensor<float> pooled = downsample_time(groups);
  for (float v : pooled.data()) CHECK(v == 4.0f);
  CHECK_THROWS_AS(downsample_time(Tensor<float>({128, 510})), ShapeError);
  CHECK_THROWS_AS(downsample_time(Tensor<float>({64, 512})), ShapeError);
  CHECK_THROWS_AS(downsample_time(Tensor<float>({128, 512, 1})), ShapeError);
}

TEST_CASE("container round trip") {
  RngState rng(8);
  auto records = random_records(3, 3, rng);
  records[1].features[7] = -0.0f;
  records[2].features[0] = std::numeric_limits<float>::denorm_min();
  const auto path = temp_path("three.serc");
  save_container(records, path);
  const auto loaded = load_container(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].label == records[i].label);
    CHECK(loaded[i].speaker == records[i].speaker);
    CHECK(std::memcmp(loaded[i].features.data(), records[i].features.data(), 128 * 128 * 4) == 0);
  }
  const std::string bytes = read_bytes(path);
  CHECK(bytes.substr(0, 6) == "SERC1\n");
  const std::size_t header_len = bytes.find('\n', 6) + 1 - 6;
  CHECK(bytes.size() == 6 + header_len + 3 * 128 * 128 * 4);
  const auto header = nlohmann::json::parse(bytes.substr(6, header_len - 1));
  CHECK(header["count"] == 3);
  CHECK(header["height"] == 128);
  CHECK(header["width"] == 128);
  CHECK(header["classes"] == nlohmann::json(class_names()));
  CHECK(bytes.substr(6, 10) == "{\"count\":3");
  // re-encoding is byte stable
  CHECK(encode_container(loaded) == bytes);

  SUBCASE("truncated payload") {
    try {
      decode_container(bytes.substr(0, bytes.size() - 1));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("length mismatch") != std::string::npos);
    }
  }
  SUBCASE("bad magic") { CHECK_THROWS_AS(decode_container("SERC2\n" + bytes.substr(6)), Error); }
  SUBCASE("label out of range") {
    std::string bad = bytes;
    const auto pos = bad.find("\"label\":");
    bad[pos + 8] = '7';
    CHECK_THROWS_AS(decode_container(bad), Error);
  }
  SUBCASE("empty and inconsistent inputs") {
    CHECK_THROWS_AS(encode_container({}), Error);
    auto mixed = records;
    mixed[1].features.resize(64 * 64);
    mixed[1].height = mixed[1].width = 64;
    CHECK_THROWS_AS(encode_container(mixed), ShapeError);
    auto nan = records;
    nan[0].features[3] = std::nanf("");
    CHECK_THROWS_AS(encode_container(nan), Error);
  }
}

TEST_CASE("speaker folds") {
  RngState data_rng(1);
  const auto records = random_records(130, 10, data_rng);
  RngState rng(99);
  const FoldPlan plan = make_folds(records, rng);
  REQUIRE(plan.folds.size() == 5);
  CHECK_NOTHROW(validate_fold_plan(plan, records));
  std::set<std::string> tested;
  for (const auto& fold : plan.folds) {
    CHECK(fold.test_speakers.size() == 2);
    tested.insert(fold.test_speakers.begin(), fold.test_speakers.end());
    CHECK(fold.test.size() == 26);
    CHECK(fold.search.size() == 73);  // round(0.7 * 104)
    CHECK(fold.train.size() == 31);
    std::set<std::size_t> all;
    for (auto* part : {&fold.test, &fold.search, &fold.train}) all.insert(part->begin(), part->end());
    CHECK(all.size() == records.size());
  }
  CHECK(tested.size() == 10);
  RngState again(99);
  const FoldPlan plan2 = make_folds(records, again);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(plan2.folds[f].test_speakers == plan.folds[f].test_speakers);
    CHECK(plan2.folds[f].search == plan.folds[f].search);
    CHECK(plan2.folds[f].train == plan.folds[f].train);
  }
  SUBCASE("100 remaining records split 70 / 30") {
    auto recs = random_records(125, 5, data_rng);  // 25 per speaker, one speaker per fold
    RngState r(3);
    for (const auto& fold : make_folds(recs, r).folds) {
      CHECK(fold.search.size() == 70);
      CHECK(fold.train.size() == 30);
    }
  }
  SUBCASE("uneven speaker groups differ by at most one") {
    auto recs = random_records(70, 7, data_rng);
    RngState r(4);
    std::vector<std::size_t> sizes;
    for (const auto& fold : make_folds(recs, r).folds) sizes.push_back(fold.test_speakers.size());
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
  }
  SUBCASE("too few speakers") {
    auto recs = random_records(20, 4, data_rng);
    RngState r(5);
    CHECK_THROWS_AS(make_folds(recs, r), Error);
  }
  SUBCASE("tampered plan is rejected") {
    FoldPlan bad = plan;
    bad.folds[0].train.push_back(bad.folds[0].search.front());
    CHECK_THROWS_AS(validate_fold_plan(bad, records), Error);
  }
}

TEST_CASE("synthetic dataset") {
  SynthConfig cfg;
  RngState rng(2);
  const auto records = synth_dataset(cfg, rng);
  REQUIRE(records.size() == 64);
  std::vector<int> per_class(4, 0);
  std::set<std::string> speakers;
  for (const auto& r : records) {
    ++per_class[static_cast<std::size_t>(r.label)];
    speakers.insert(r.speaker);
    CHECK(r.features.size() == 128 * 128);
  }
  CHECK(per_class == std::vector<int>{16, 16, 16, 16});
  CHECK(speakers.size() == 8);

  SUBCASE("noise level matches the target SNR") {
    double signal = 0, noise = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto clean = synth_pattern(cfg, records[i].label, (i / 4) % 8);
      for (std::size_t k = 0; k < clean.size(); ++k) {
        signal += double(clean[k]) * clean[k];
        noise += std::pow(double(records[i].features[k]) - clean[k], 2);
      }
    }
    CHECK(10.0 * std::log10(signal / noise) == doctest::Approx(10.0).epsilon(0.01));
  }
  SUBCASE("noiseless records repeat within class and speaker") {
    SynthConfig clean = cfg;
    clean.noise = false;
    RngState r(7);
    const auto recs = synth_dataset(clean, r);
    for (std::size_t i = 0; i < recs.size(); ++i)
      for (std::size_t j = i + 1; j < recs.size(); ++j)
        if (recs[i].label == recs[j].label && recs[i].speaker == recs[j].speaker)
          CHECK(recs[i].features == recs[j].features);
  }
  SUBCASE("nearest centroid separates the noiseless classes") {
    SynthConfig clean = cfg;
    clean.noise = false;
    RngState r(7);
    const auto recs = synth_dataset(clean, r);
    std::vector<std::vector<double>> centroid(4, std::vector<double>(128 * 128, 0.0));
    for (const auto& rec : recs)
      for (std::size_t k = 0; k < rec.features.size(); ++k) centroid[static_cast<std::size_t>(rec.label)][k] += rec.features[k] / 16.0;
    std::size_t correct = 0;
    for (const auto& rec : recs) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < 4; ++c) {
        double d = 0;
        for (std::size_t k = 0; k < rec.features.size(); ++k) d += std::pow(rec.features[k] - centroid[c][k], 2);
        if (d < best_d) best_d = d, best = c;
      }
      correct += best == static_cast<std::size_t>(rec.label);
    }
    CHECK(correct == recs.size());
  }
  SUBCASE("determinism and errors") {
    RngState a(11), b(11);
    CHECK(synth_dataset(cfg, a) == synth_dataset(cfg, b));
    SynthConfig small = cfg;
    small.n = 3;
    CHECK_THROWS_AS(synth_dataset(small, a), Error);
  }
}

TEST_CASE("wav and label files") {
  const auto wav = temp_path("tone.wav");
  Utterance u = tone(0.25, 440.0);
  write_wav(wav, u.waveform, 16000);
  Utterance back = read_wav(wav);
  CHECK(back.sample_rate == 16000.0);
  REQUIRE(back.waveform.size() == u.waveform.size());
  for (std::size_t i = 0; i < u.waveform.size(); ++i) CHECK(std::abs(back.waveform[i] - u.waveform[i]) <= 0.5 / 32768.0 + 1e-12);

  // 8-bit PCM is rejected
  std::string bytes = read_bytes(wav);
  bytes[34] = 8;
  const auto bad = temp_path("eight.wav");
  std::ofstream(bad, std::ios::binary) << bytes;
  CHECK_THROWS_AS(read_wav(bad), Error);
  CHECK_THROWS_AS(read_wav(temp_path("missing.wav")), Error);

  const auto csv = temp_path("labels.csv");
  std::ofstream(csv) << "path,label,speaker\ntone.wav,anger,s1\n/abs/x.wav,0,s2\n";
  const auto rows = read_labels_csv(csv);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].path == csv.parent_path() / "tone.wav");
  CHECK(rows[0].label == 2);
  CHECK(rows[1].path == "/abs/x.wav");
  std::ofstream(csv) << "path,label,speaker\ntone.wav,fear,s1\n";
  CHECK_THROWS_AS(read_labels_csv(csv), Error);
  std::ofstream(csv) << "file,label\n";
  CHECK_THROWS_AS(read_labels_csv(csv), Error);
}
