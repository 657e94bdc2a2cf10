#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "icethick/error.hpp"
#include "icethick/training.hpp"

namespace icethick {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'T', 'K'};
constexpr int kSidecarVersion = 1;

template <typename U>
void put(std::vector<char>& out, U value) {
  static_assert(std::endian::native == std::endian::little, "ICTK I/O assumes a little-endian host");
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::filesystem::path path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename U>
  U get() {
    U value;
    std::memcpy(&value, take(sizeof(U)), sizeof(U));
    return value;
  }

  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw IoError(path_.string() + ": truncated ICTK file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw IoError(path.string() + ": write failed");
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void copy_into(Tensor<float>& dst, const NamedTensor& src) {
  if (dst.shape() != src.shape) {
    throw DimensionError("checkpoint tensor '" + src.name + "' has shape " + to_string(src.shape) +
                         ", model expects " + to_string(dst.shape()));
  }
  dst.assign(src.values);
}

}  // namespace

void write_ictk(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::vector<char> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kIctkVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (numel(t.shape) != t.values.size())
      throw DimensionError("write_ictk: '" + t.name + "' value count does not match its shape");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (const std::size_t d : t.shape) put<std::uint64_t>(out, d);
    for (const float v : t.values) put<float>(out, v);
  }
  write_file(path, out.data(), out.size());
}

std::vector<NamedTensor> read_ictk(const std::filesystem::path& path) {
  Reader r(read_file(path), path);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw IoError(path.string() + ": not an ICTK file");
  const auto version = r.get<std::uint32_t>();
  if (version != kIctkVersion)
    throw IoError(path.string() + ": unsupported ICTK version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = r.get<std::uint32_t>();
    t.name.assign(r.take(len), len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw IoError(path.string() + ": implausible rank for '" + t.name + "'");
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = numel(t.shape);
    const char* raw = r.take(n * sizeof(float));
    t.values.resize(n);
    std::memcpy(t.values.data(), raw, n * sizeof(float));
    tensors.push_back(std::move(t));
  }
  if (!r.done()) throw IoError(path.string() + ": trailing bytes after ICTK tensors");
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const AdamState* adam) {
  std::vector<NamedTensor> tensors;
  const auto append = [&](const ParameterStore<float>& store) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto d = store[i].data();
      tensors.push_back({store.names()[i], store[i].shape(), {d.begin(), d.end()}});
    }
  };
  append(model.parameters());
  append(model.norm_statistics());
  if (adam != nullptr) {
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      tensors.push_back({"adam.m." + params.names()[i], params[i].shape(), adam->m.at(i)});
    for (std::size_t i = 0; i < params.size(); ++i)
      tensors.push_back({"adam.v." + params.names()[i], params[i].shape(), adam->v.at(i)});
    tensors.push_back({"adam.t", {}, {static_cast<float>(adam->t)}});
  }
  write_ictk(path, tensors);
  const nlohmann::json meta = {{"kind", std::string(to_string(model.kind()))},
                               {"spec", to_json(model.spec())},
                               {"seed", model.seed()},
                               {"format_version", kSidecarVersion}};
  const std::string text = meta.dump(2) + "\n";
  write_file(sidecar(path), text.data(), text.size());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json meta;
  try {
    const std::vector<char> bytes = read_file(sidecar(path));
    meta = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar(path).string() + ": invalid JSON: " + e.what());
  }
  if (!meta.is_object() || !meta.contains("kind") || !meta.contains("spec") || !meta.contains("seed"))
    throw IoError(sidecar(path).string() + ": missing kind, spec or seed");
  if (meta.value("format_version", 0) != kSidecarVersion)
    throw IoError(sidecar(path).string() + ": unsupported format_version");
  Checkpoint ck{Model<float>::build(parse_backbone(meta.at("kind").get<std::string>()),
                                    architecture_from_json(meta.at("spec")),
                                    meta.at("seed").get<std::uint64_t>()),
                std::nullopt};
  const std::vector<NamedTensor> tensors = read_ictk(path);
  auto& params = ck.model.parameters();
  auto& norm = ck.model.norm_statistics();
  std::size_t loaded = 0;
  AdamState adam = AdamState::zeros_like(params);
  bool has_adam = false;
  for (const auto& t : tensors) {
    if (params.contains(t.name)) {
      copy_into(params.at(t.name), t);
      ++loaded;
    } else if (norm.contains(t.name)) {
      copy_into(norm.at(t.name), t);
      ++loaded;
    } else if (t.name == "adam.t") {
      if (t.values.size() != 1) throw IoError(path.string() + ": adam.t must be a scalar");
      adam.t = static_cast<std::uint64_t>(t.values[0]);
      has_adam = true;
    } else if (t.name.rfind("adam.m.", 0) == 0 || t.name.rfind("adam.v.", 0) == 0) {
      const std::string param = t.name.substr(7);
      if (!params.contains(param)) throw IoError(path.string() + ": optimizer state for unknown '" + param + "'");
      const auto& names = params.names();
      const auto idx = static_cast<std::size_t>(std::find(names.begin(), names.end(), param) - names.begin());
      if (t.values.size() != params[idx].size())
        throw DimensionError(path.string() + ": '" + t.name + "' has wrong size");
      (t.name[5] == 'm' ? adam.m : adam.v)[idx] = t.values;
    } else {
      throw IoError(path.string() + ": unexpected tensor '" + t.name + "'");
    }
  }
  if (loaded != params.size() + norm.size())
    throw IoError(path.string() + ": checkpoint does not cover every model tensor");
  if (has_adam) ck.adam = std::move(adam);
  return ck;
}

}  // namespace icethick
