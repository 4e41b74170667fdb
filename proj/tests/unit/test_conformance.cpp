// Golden request/response pairs for the wire protocol, served by the mocks.
// Set ORTS_UPDATE_GOLDEN=1 to rewrite the expected bodies from the current
// implementation.

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "orts/mockmodel.hpp"
#include "test_util.hpp"

using namespace orts;
using nlohmann::ordered_json;

namespace {

const std::filesystem::path kGoldenDir = std::filesystem::path(ORTS_TEST_FIXTURES) / "conformance";

struct Env {
  Env() : dir("conf"), relevancy(make_relevancy_fixtures(dir / "rel")), detection(make_detection_fixtures(dir / "det")) {}
  test::TempDir dir;
  Dataset relevancy;
  Dataset detection;
};

const Env& env() {
  static const Env e;
  return e;
}

std::string image_b64(const std::string& spec) {
  const auto& e = env();
  if (spec.rfind("@fixture:", 0) == 0) {
    const std::string id = spec.substr(9);
    for (const Dataset* ds : {&e.relevancy, &e.detection}) {
      if (const auto* img = ds->find_image(id)) {
        return base64_encode(encode_png(read_png(img->path)));
      }
    }
    throw Error("unknown fixture " + id);
  }
  if (spec.rfind("@blank:", 0) == 0) {
    const auto x = spec.find('x', 7);
    return base64_encode(encode_png(RasterImage(std::stoi(spec.substr(7, x - 7)), std::stoi(spec.substr(x + 1)))));
  }
  return spec;
}

// "*" in the golden body matches any value of the same kind.
bool matches(const ordered_json& expect, const ordered_json& got, std::string& where) {
  if (expect.is_string() && expect.get<std::string>() == "*") {
    return got.is_string();
  }
  if (expect.is_number() && got.is_number()) {
    return std::abs(expect.get<double>() - got.get<double>()) <= 1e-9;
  }
  if (expect.type() != got.type()) {
    return false;
  }
  if (expect.is_object()) {
    if (expect.size() != got.size()) {
      return false;
    }
    for (const auto& [k, v] : expect.items()) {
      where += "." + k;
      if (!got.contains(k) || !matches(v, got.at(k), where)) {
        return false;
      }
      where.resize(where.size() - k.size() - 1);
    }
    return true;
  }
  if (expect.is_array()) {
    if (expect.size() != got.size()) {
      return false;
    }
    for (std::size_t i = 0; i < expect.size(); ++i) {
      const std::string tag = "[" + std::to_string(i) + "]";
      where += tag;
      if (!matches(expect[i], got[i], where)) {
        return false;
      }
      where.resize(where.size() - tag.size());
    }
    return true;
  }
  return expect == got;
}

void run_case(const std::filesystem::path& file) {
  CAPTURE(file.filename().string());
  std::ifstream in(file);
  REQUIRE(in);
  ordered_json golden = ordered_json::parse(in);

  const auto& e = env();
  const MockKind kind = parse_mock_kind(golden.at("model").get<std::string>());
  const Dataset& ds = kind == MockKind::scripted ? e.detection : e.relevancy;
  MockModel model(kind, MockRegistry::from_dataset(ds));
  ProtocolServer server(model.backend());
  server.start();
  httplib::Client http("127.0.0.1", server.port());

  const auto& req = golden.at("request");
  const std::string path = req.at("path").get<std::string>();
  httplib::Result res;
  if (req.at("method") == "GET") {
    res = http.Get(path);
  } else {
    std::string body;
    if (req.contains("raw")) {
      body = req.at("raw").get<std::string>();
    } else {
      ordered_json j = req.at("json");
      if (j.contains("image_b64")) {
        j["image_b64"] = image_b64(j["image_b64"].get<std::string>());
      }
      body = j.dump();
    }
    res = http.Post(path, body, "application/json");
  }
  server.stop();
  REQUIRE(res);
  const auto got = ordered_json::parse(res->body);

  if (std::getenv("ORTS_UPDATE_GOLDEN") != nullptr) {
    golden["expect"]["status"] = res->status;
    if (res->status != 200) {
      golden["expect"]["body"] = {{"error", "*"}};
    } else {
      golden["expect"]["body"] = got;
    }
    std::ofstream(file) << golden.dump(2) << "\n";
    return;
  }
  CHECK(res->status == golden.at("expect").at("status").get<int>());
  std::string where = "body";
  CHECK_MESSAGE(matches(golden.at("expect").at("body"), got, where), "mismatch at " << where << ": " << res->body);
}

}  // namespace

TEST_CASE("wire protocol golden cases") {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(kGoldenDir)) {
    if (entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  REQUIRE(files.size() >= 6);
  for (const auto& f : files) {
    run_case(f);
  }
}
