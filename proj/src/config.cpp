#include "saan/config.hpp"

#include <json.hpp>

#include "saan/error.hpp"
#include "saan/io.hpp"

namespace saan {

using nlohmann::json;

NetworkConfig CliConfig::network_config() const {
  if (network == "standard") return NetworkConfig::standard();
  if (network == "tiny") return NetworkConfig::tiny();
  throw ValidationError("config: network must be \"standard\" or \"tiny\", got \"" + network + "\"");
}

void CliConfig::validate() const {
  network_config();
  if (!(sigma > 0)) throw ValidationError("config: sigma must be positive");
  train.validate();
}

namespace {

class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj.is_object()) throw ValidationError("config: " + where_ + " must be an object");
    for (const auto& [key, _] : obj.items()) pending_.push_back(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    std::erase(pending_, std::string(key));
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + where_ + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    std::erase(pending_, std::string(key));
    return &*it;
  }

  void finish() const {
    if (!pending_.empty()) throw ValidationError("config: unknown key \"" + where_ + pending_.front() + "\"");
  }

 private:
  const json& obj_;
  std::string where_;
  std::vector<std::string> pending_;
};

void require_non_negative(const json& j, const char* key) {
  if (j.contains(key) && j[key].is_number_integer() && j[key].get<long long>() < 0) {
    throw ValidationError(std::string("config: ") + key + " must be non-negative");
  }
}

}  // namespace

CliConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), e.byte);
  }
  for (const char* key : {"seed", "phase1_epochs", "phase2_epochs", "batch_size", "crop_size"}) {
    require_non_negative(j, key);
  }

  CliConfig c;
  Reader r(j, "");
  std::string manifest = c.manifest.string(), out_dir = c.out_dir.string();
  r.get("manifest", manifest);
  r.get("out_dir", out_dir);
  r.get("network", c.network);
  r.get("sigma", c.sigma);
  TrainConfig& t = c.train;
  r.get("seed", t.seed);
  r.get("phase1_epochs", t.phase1_epochs);
  r.get("phase2_epochs", t.phase2_epochs);
  r.get("learning_rate", t.adam.learning_rate);
  r.get("beta1", t.adam.beta1);
  r.get("beta2", t.adam.beta2);
  r.get("epsilon", t.adam.epsilon);
  r.get("batch_size", t.batch_size);
  r.get("crop_size", t.crop_size);
  r.get("lambda_g", t.weights.lambda_g);
  r.get("lambda_l", t.weights.lambda_l);
  if (const json* s = r.child("synth")) {
    Reader sr(*s, "synth.");
    SynthParams& p = c.synth;
    sr.get("radius_top", p.radius_top);
    sr.get("radius_bottom", p.radius_bottom);
    sr.get("blob_peak", p.blob_peak);
    sr.get("background_mean", p.background_mean);
    sr.get("texture_amplitude", p.texture_amplitude);
    sr.get("texture_cell", p.texture_cell);
    sr.get("pixel_noise", p.pixel_noise);
    sr.finish();
  }
  r.finish();

  c.manifest = base_dir / manifest;
  c.out_dir = base_dir / out_dir;
  c.train.network = c.network_config();
  c.validate();
  return c;
}

CliConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

std::string format_config(const CliConfig& c) {
  const TrainConfig& t = c.train;
  json j = {{"manifest", c.manifest.string()},
            {"out_dir", c.out_dir.string()},
            {"network", c.network},
            {"sigma", c.sigma},
            {"seed", t.seed},
            {"phase1_epochs", t.phase1_epochs},
            {"phase2_epochs", t.phase2_epochs},
            {"learning_rate", t.adam.learning_rate},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"epsilon", t.adam.epsilon},
            {"batch_size", t.batch_size},
            {"crop_size", t.crop_size},
            {"lambda_g", t.weights.lambda_g},
            {"lambda_l", t.weights.lambda_l},
            {"synth",
             {{"radius_top", c.synth.radius_top},
              {"radius_bottom", c.synth.radius_bottom},
              {"blob_peak", c.synth.blob_peak},
              {"background_mean", c.synth.background_mean},
              {"texture_amplitude", c.synth.texture_amplitude},
              {"texture_cell", c.synth.texture_cell},
              {"pixel_noise", c.synth.pixel_noise}}}};
  return j.dump(2) + "\n";
}

}  // namespace saan
