// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "introspect/detection_eval.hpp"
#include "introspect/errors.hpp"
#include "introspect/hashing.hpp"
#include "introspect/tensor_io.hpp"
#include "test_util.hpp"

using namespace introspect;
using testutil::TempDir;

TEST_CASE("AMF1 file layout for a 1x1x2 map") {
  TempDir dir("amf");
  const ActivationMap m(1, 1, 2, {0.0f, 1.0f});
  write_activation_map(m, dir / "m.amf");
  const std::string bytes = testutil::read_bytes(dir / "m.amf");
  REQUIRE(bytes.size() == 24);
  CHECK(bytes.substr(0, 4) == "AMF1");
  // C, H, W little-endian.
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 2);
  // 1.0f = 0x3f800000.
  CHECK(static_cast<unsigned char>(bytes[23]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[22]) == 0x80);
}

TEST_CASE("AMF1 round trip is bit exact") {
  TempDir dir("amf");
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = static_cast<std::uint32_t>(1 + rng() % 4);
    const auto h = static_cast<std::uint32_t>(1 + rng() % 7);
    const auto w = static_cast<std::uint32_t>(1 + rng() % 7);
    auto m = testutil::random_map(rng, c, h, w, 0.3);
    // Include subnormals and the largest finite value.
    m.values()[0] = std::numeric_limits<float>::denorm_min();
    m.values()[m.size() - 1] = std::numeric_limits<float>::max();
    write_activation_map(m, dir / "r.amf");
    const ActivationMap back = read_activation_map(dir / "r.amf");
    CHECK(back == m);
    CHECK(decode_activation_map(encode_activation_map(m)) == m);
  }
}

TEST_CASE("invalid maps are rejected before anything is written") {
  TempDir dir("amf");
  ActivationMap m(1, 1, 2);
  m.values()[1] = std::nanf("");
  CHECK_THROWS_AS(write_activation_map(m, dir / "nan.amf"), InvariantError);
  CHECK_FALSE(std::filesystem::exists(dir / "nan.amf"));
  m.values()[1] = -1.0f;
  CHECK_THROWS_AS(write_activation_map(m, dir / "neg.amf"), InvariantError);
  CHECK_FALSE(std::filesystem::exists(dir / "neg.amf"));
  m.values()[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(write_activation_map(m, dir / "inf.amf"), InvariantError);
  CHECK_THROWS_AS(ActivationMap(1, 1, 2, {1.0f, -0.5f}), InvariantError);
  CHECK_THROWS_AS(ActivationMap(1, 1, 2, {1.0f}), InvariantError);
  CHECK_THROWS(ActivationMap(0, 1, 1));
}

TEST_CASE("reader rejects bad magic, truncation and bad payloads") {
  TempDir dir("amf");
  const ActivationMap m(2, 2, 2);
  std::string bytes = encode_activation_map(m);

  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  testutil::write_bytes(dir / "magic.amf", bad);
  CHECK_THROWS_AS(read_activation_map(dir / "magic.amf"), FormatError);

  testutil::write_bytes(dir / "short.amf", bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(read_activation_map(dir / "short.amf"), FormatError);

  testutil::write_bytes(dir / "long.amf", bytes + "abcd");
  CHECK_THROWS_AS(read_activation_map(dir / "long.amf"), FormatError);

  testutil::write_bytes(dir / "header.amf", bytes.substr(0, 10));
  CHECK_THROWS_AS(read_activation_map(dir / "header.amf"), FormatError);

  std::string neg = bytes;
  neg[kAmfHeaderBytes + 3] = static_cast<char>(0xbf);  // -0.5f
  neg[kAmfHeaderBytes + 2] = static_cast<char>(0x00);
  testutil::write_bytes(dir / "neg.amf", neg);
  CHECK_THROWS_AS(read_activation_map(dir / "neg.amf"), InvariantError);

  std::string nan = bytes;
  nan[kAmfHeaderBytes + 3] = static_cast<char>(0x7f);
  nan[kAmfHeaderBytes + 2] = static_cast<char>(0xc0);
  testutil::write_bytes(dir / "nan.amf", nan);
  CHECK_THROWS_AS(read_activation_map(dir / "nan.amf"), InvariantError);

  CHECK_THROWS_AS(read_activation_map(dir / "missing.amf"), IoError);
}

TEST_CASE("frame records map raw class names to the merged scheme") {
  const std::string line =
      R"({"frame_id":"f1","detections":[{"class":"car","box":[0,0,10,10],"confidence":0.9}],)"
      R"("ground_truth":[{"class":"Pedestrian","box":[1,1,5,9]}]})";
  const FrameRecord r = parse_frame_record(line, ClassMap::defaults(), true);
  CHECK(r.frame_id == "f1");
  REQUIRE(r.detections.size() == 1);
  CHECK(r.detections[0].cls == ObjectClass::kVehicle);
  CHECK(r.detections[0].confidence == doctest::Approx(0.9));
  REQUIRE(r.ground_truth.size() == 1);
  CHECK(r.ground_truth[0].cls == ObjectClass::kPeople);
  CHECK_FALSE(r.image.has_value());
}

TEST_CASE("unknown classes: strict rejects, lenient skips") {
  const std::string line =
      R"({"frame_id":"f","detections":[{"class":"traffic_light","box":[0,0,1,1],"confidence":0.5}],)"
      R"("ground_truth":[]})";
  CHECK_THROWS_AS(parse_frame_record(line, ClassMap::defaults(), true), InputError);
  std::size_t skipped = 0;
  const FrameRecord r = parse_frame_record(line, ClassMap::defaults(), false, {}, &skipped);
  CHECK(r.detections.empty());
  CHECK(skipped == 1);
}

TEST_CASE("record files: empty, bad geometry and line numbers") {
  TempDir dir("rec");
  testutil::write_bytes(dir / "empty.jsonl", "");
  CHECK(read_frame_records(dir / "empty.jsonl").empty());

  testutil::write_bytes(dir / "bad.jsonl",
                        R"({"frame_id":"ok","detections":[],"ground_truth":[]})"
                        "\n"
                        R"({"frame_id":"broken_7","detections":[{"class":"car","box":[5,0,5,10],"confidence":0.5}],"ground_truth":[]})"
                        "\n");
  try {
    read_frame_records(dir / "bad.jsonl");
    FAIL("expected an error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("broken_7") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }

  testutil::write_bytes(dir / "conf.jsonl",
                        R"({"frame_id":"c","detections":[{"class":"car","box":[0,0,5,10],"confidence":1.5}],"ground_truth":[]})"
                        "\n");
  CHECK_THROWS_AS(read_frame_records(dir / "conf.jsonl"), InputError);

  testutil::write_bytes(dir / "json.jsonl", "{not json\n");
  CHECK_THROWS_AS(read_frame_records(dir / "json.jsonl"), FormatError);
}

TEST_CASE("frame records with images round trip through the line format") {
  TempDir dir("rec");
  FrameRecord r;
  r.frame_id = "img";
  r.detections.push_back({ObjectClass::kPeople, {1.5, 2, 8, 9.25}, 0.25});
  r.ground_truth.push_back({ObjectClass::kVehicle, {0, 0, 4, 4}});
  ImageMeta image;
  image.width = 3;
  image.height = 2;
  image.channels = 2;
  for (int i = 0; i < 12; ++i) image.pixels.push_back(static_cast<std::uint8_t>(i * 20));
  r.image = image;
  const std::vector<FrameRecord> records{r};
  write_frame_records(records, dir / "r.jsonl");
  const auto back = read_frame_records(dir / "r.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0] == r);

  // pixels_path resolves relative to the record file.
  testutil::write_bytes(dir / "px.raw", std::string(image.pixels.begin(), image.pixels.end()));
  testutil::write_bytes(dir / "p.jsonl",
                        R"({"frame_id":"img","detections":[],"ground_truth":[],"image":{"width":3,"height":2,"channels":2,"pixels_path":"px.raw"}})"
                        "\n");
  const auto with_path = read_frame_records(dir / "p.jsonl");
  REQUIRE(with_path[0].image.has_value());
  CHECK(with_path[0].image->pixels == image.pixels);
}

TEST_CASE("manifest round trip and validation") {
  TempDir dir("man");
  write_activation_map(ActivationMap(1, 2, 2), dir / "a.amf");
  testutil::write_bytes(dir / "r.jsonl", "");
  CorpusManifest m;
  m.entries.push_back({"f0", {"a.amf"}, "r.jsonl", Split::kTrain});
  m.entries.push_back({"f1", {"a.amf", "a.amf"}, "r.jsonl", Split::kUnassigned});
  write_manifest(m, dir / "manifest.jsonl");
  const CorpusManifest back = read_manifest(dir / "manifest.jsonl");
  CHECK(back.format_version == kManifestFormatVersion);
  CHECK(back.entries == m.entries);
  CHECK(back.resolve("a.amf") == dir / "a.amf");

  CorpusManifest dup = m;
  dup.entries[1].frame_id = "f0";
  write_manifest(dup, dir / "dup.jsonl");
  CHECK_THROWS_AS(read_manifest(dir / "dup.jsonl"), FormatError);

  CorpusManifest missing = m;
  missing.entries[0].activations = {"nope.amf"};
  write_manifest(missing, dir / "missing.jsonl");
  CHECK_THROWS_AS(read_manifest(dir / "missing.jsonl"), IoError);
  CHECK_NOTHROW(read_manifest(dir / "missing.jsonl", false));
}

TEST_CASE("split names") {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest, Split::kUnassigned}) {
    CHECK(parse_split(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_split("holdout"), InputError);
}

TEST_CASE("hash helpers") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(short_hash("abc").size() == 16);
  const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 255};
  CHECK(base64_decode(base64_encode(bytes)) == bytes);
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a'}) == "TWE=");
  CHECK(derive_seed(1, "split") == derive_seed(1, "split"));
  CHECK(derive_seed(1, "split") != derive_seed(1, "init"));
  CHECK(derive_seed(1, "split") != derive_seed(2, "split"));
}
