#include "langseg/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "langseg/errors.hpp"

namespace langseg {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string header_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError("truncated checkpoint header in " + path);
  }
  return line;
}

std::uint64_t parse_field(const std::string& line, const std::string& key,
                          const std::string& path, int base = 10) {
  std::istringstream ss(line);
  std::string word;
  ss >> word;
  if (word != key) {
    throw IoError(path + ": expected '" + key + "' line, got '" + line + "'");
  }
  std::uint64_t value = 0;
  ss >> (base == 16 ? std::hex : std::dec) >> value;
  if (ss.fail()) throw IoError(path + ": bad value in '" + line + "'");
  return value;
}

}  // namespace

std::uint64_t model_config_hash(const ModelConfig& cfg, std::size_t vocab_size) {
  std::ostringstream ss;
  ss << "langseg h=" << cfg.height << " w=" << cfg.width
     << " f=" << cfg.feature_width << " d=" << cfg.embed_dim
     << " k=" << cfg.levels << " c=" << cfg.num_classes
     << " zl=" << (cfg.zero_language ? 1 : 0) << " v=" << vocab_size;
  return fnv1a(ss.str());
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamState& adam, std::size_t step,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");

  const auto& m = adam.first_moments();
  const auto& v = adam.second_moments();
  const std::size_t records = params.size() + m.size() + v.size();

  out << "LSCK v1\n";
  out << "step " << step << "\n";
  out << "hash " << std::hex << config_hash << std::dec << "\n";
  out << "adam_t " << adam.t() << "\n";
  out << "records " << records << "\n";
  for (const auto& [name, var] : params) {
    out << name << "\n";
    write_tnsr(out, var->value);
  }
  for (const auto& [name, moment] : m) {
    out << "adam.m." << name << "\n";
    write_tnsr(out, moment);
  }
  for (const auto& [name, moment] : v) {
    out << "adam.v." << name << "\n";
    write_tnsr(out, moment);
  }
  if (!out) throw IoError("write failed for " + path);
}

std::size_t load_checkpoint(const std::string& path, ParamStore& params,
                            AdamState& adam, std::uint64_t expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  if (header_line(in, path) != "LSCK v1") {
    throw IoError(path + " is not an LSCK v1 checkpoint");
  }
  const std::uint64_t step = parse_field(header_line(in, path), "step", path);
  const std::uint64_t hash = parse_field(header_line(in, path), "hash", path, 16);
  if (hash != expected_hash) {
    throw ArtifactMismatchError(
        path + " was written for a different model configuration");
  }
  const std::uint64_t adam_t = parse_field(header_line(in, path), "adam_t", path);
  const std::uint64_t records = parse_field(header_line(in, path), "records", path);

  std::map<std::string, Tensor> m, v;
  std::size_t loaded_params = 0;
  for (std::uint64_t i = 0; i < records; ++i) {
    const std::string name = header_line(in, path);
    Tensor t = read_tnsr(in);
    if (name.rfind("adam.m.", 0) == 0) {
      m.emplace(name.substr(7), std::move(t));
    } else if (name.rfind("adam.v.", 0) == 0) {
      v.emplace(name.substr(7), std::move(t));
    } else {
      if (!params.contains(name)) {
        throw ArtifactMismatchError(path + " has unknown parameter " + name);
      }
      Tensor& dst = params.value(name);
      if (!dst.same_shape(t)) {
        throw ArtifactMismatchError(path + ": shape mismatch for " + name +
                                    " (" + shape_to_string(t.shape()) + " vs " +
                                    shape_to_string(dst.shape()) + ")");
      }
      dst = std::move(t);
      ++loaded_params;
    }
  }
  if (loaded_params != params.size()) {
    throw ArtifactMismatchError(
        path + " covers " + std::to_string(loaded_params) + " of " +
        std::to_string(params.size()) + " model parameters");
  }
  adam.restore(std::move(m), std::move(v), adam_t);
  return step;
}

}  // namespace langseg
