#include "mcat/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mcat/error.hpp"
#include "mcat/io.hpp"

namespace mcat {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

struct CheckpointAccess {
  static Generator make(int class_id, Mlp net, bool frozen) {
    Generator g;
    g.class_id_ = class_id;
    g.net_ = std::move(net);
    g.frozen_ = frozen;
    return g;
  }
  static Mlp& net(Generator& g) { return g.net_; }
};

namespace {

constexpr const char* kFormat = "mcat-checkpoint";
constexpr int kVersion = 1;

void add_mlp_blocks(const std::string& prefix, const Mlp& net, json& blocks, std::vector<const Tensor*>& tensors) {
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = prefix + "." + std::to_string(i / 2) + (i % 2 == 0 ? ".weight" : ".bias");
    blocks.push_back({{"name", name}, {"shape", params[i]->shape()}});
    tensors.push_back(params[i]);
  }
}

// Rebuilds an MLP with the given widths; parameters are filled by the caller.
Mlp empty_mlp(const std::vector<std::size_t>& widths) {
  Mlp net(widths, 0);
  for (Tensor* p : net.parameters()) std::fill(p->data().begin(), p->data().end(), 0.0);
  return net;
}

}  // namespace

std::string serialize_checkpoint(const ModelBundle& model, const json& extra) {
  json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["logit_scale"] = model.logit_scale;
  header["feature_extractor"] = {{"role", "feature_extractor"},
                                 {"widths", model.extractor.net.widths()},
                                 {"normalize_output", model.extractor.normalize_output},
                                 {"seed", model.extractor.seed}};
  header["classifier"] = {{"role", "classifier"},
                          {"shape", model.classifier.weight.shape()},
                          {"normalize_rows", model.classifier.normalize_rows}};
  json gens = json::array();
  for (const auto& g : model.generators) {
    gens.push_back({{"role", "generator"}, {"class", g.class_id()}, {"widths", g.net().widths()}, {"frozen", g.frozen()}});
  }
  header["generators"] = gens;

  json blocks = json::array();
  std::vector<const Tensor*> tensors;
  add_mlp_blocks("extractor", model.extractor.net, blocks, tensors);
  blocks.push_back({{"name", "classifier.weight"}, {"shape", model.classifier.weight.shape()}});
  tensors.push_back(&model.classifier.weight);
  for (const auto& g : model.generators) {
    add_mlp_blocks("generator" + std::to_string(g.class_id()), g.net(), blocks, tensors);
  }
  header["blocks"] = blocks;
  header["config"] = extra.is_null() ? json::object() : extra;

  std::string out = header.dump();
  out += '\n';
  for (const Tensor* t : tensors) {
    const auto data = t->data();
    const std::size_t bytes = data.size() * sizeof(double);
    const std::size_t offset = out.size();
    out.resize(offset + bytes);
    std::memcpy(out.data() + offset, data.data(), bytes);
  }
  return out;
}

LoadedCheckpoint deserialize_checkpoint(std::string_view bytes) {
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw FormatError("checkpoint header is not terminated");
  json header;
  try {
    header = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion) {
    throw FormatError("not an mcat checkpoint (format/version mismatch)");
  }

  LoadedCheckpoint loaded;
  ModelBundle& model = loaded.model;
  try {
    model.logit_scale = header.at("logit_scale").get<double>();
    const auto& fe = header.at("feature_extractor");
    model.extractor.net = empty_mlp(fe.at("widths").get<std::vector<std::size_t>>());
    model.extractor.normalize_output = fe.at("normalize_output").get<bool>();
    model.extractor.seed = fe.at("seed").get<std::uint64_t>();
    const auto& clf = header.at("classifier");
    model.classifier.weight = Tensor(clf.at("shape").get<Shape>());
    model.classifier.normalize_rows = clf.at("normalize_rows").get<bool>();
    for (const auto& g : header.at("generators")) {
      model.generators.push_back(CheckpointAccess::make(
          g.at("class").get<int>(), empty_mlp(g.at("widths").get<std::vector<std::size_t>>()), g.at("frozen").get<bool>()));
    }
    loaded.config = header.at("config");
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  // Fill blocks in the same declaration order used by serialize_checkpoint.
  std::vector<Tensor*> tensors;
  for (Tensor* p : model.extractor.net.parameters()) tensors.push_back(p);
  tensors.push_back(&model.classifier.weight);
  for (auto& g : model.generators) {
    for (Tensor* p : CheckpointAccess::net(g).parameters()) tensors.push_back(p);
  }
  const auto& blocks = header.at("blocks");
  if (blocks.size() != tensors.size()) throw FormatError("checkpoint block list does not match its roles");

  std::size_t offset = newline + 1;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (blocks[i].at("shape").get<Shape>() != tensors[i]->shape()) {
      throw FormatError("checkpoint block " + blocks[i].at("name").get<std::string>() + " has an unexpected shape");
    }
    const std::size_t n = tensors[i]->size() * sizeof(double);
    if (offset + n > bytes.size()) throw FormatError("checkpoint is truncated");
    std::memcpy(tensors[i]->data().data(), bytes.data() + offset, n);
    offset += n;
  }
  if (offset != bytes.size()) throw FormatError("trailing bytes after checkpoint blocks");
  return loaded;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model, const json& extra) {
  write_file_atomic(path, serialize_checkpoint(model, extra));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace mcat
