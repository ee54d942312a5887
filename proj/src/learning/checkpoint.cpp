#include "matxfer/learning/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "matxfer/common/errors.hpp"

namespace matxfer {
namespace {

constexpr const char* kMagic = "matxfer-checkpoint";
constexpr int kVersion = 1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_token(const std::string& s, const char* what) {
  require(!s.empty() && s.find_first_of(" \t\n\r") == std::string::npos,
          std::string("checkpoint ") + what + " must be a non-empty token without whitespace: '" + s + "'");
}

template <typename T>
T read_field(std::istream& in, const std::string& expected_key) {
  std::string key;
  T value{};
  in >> key >> value;
  if (!in || key != expected_key) throw ValidationError("malformed checkpoint: expected '" + expected_key + "'");
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  check_token(ckpt.schema, "schema");
  const auto& o = ckpt.optimizer;
  out << kMagic << ' ' << kVersion << '\n';
  out << "schema " << ckpt.schema << '\n';
  out << "seed " << ckpt.seed << '\n';
  out << "optimizer " << to_string(o.kind) << " learning_rate " << fmt(o.learning_rate) << " momentum "
      << fmt(o.momentum) << " beta1 " << fmt(o.beta1) << " beta2 " << fmt(o.beta2) << " epsilon " << fmt(o.epsilon)
      << " batch_size " << o.batch_size << '\n';
  out << "blocks " << ckpt.model.blocks().size() << '\n';
  for (const auto& b : ckpt.model.blocks()) {
    check_token(b.name(), "block name");
    out << "block " << b.name() << ' ' << (b.trainable() ? 1 : 0) << ' ' << b.tensors().size() << '\n';
    for (const auto& [name, t] : b.tensors()) {
      check_token(name, "tensor name");
      out << "tensor " << name << ' ' << t.rank();
      for (std::size_t d : t.shape()) out << ' ' << d;
      out << '\n';
      for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << fmt(t[i]);
      out << '\n';
    }
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (!in || magic != kMagic) throw ValidationError("not a checkpoint file");
  if (version != kVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.schema = read_field<std::string>(in, "schema");
  ckpt.seed = read_field<std::uint64_t>(in, "seed");
  ckpt.optimizer.kind = parse_optimizer_kind(read_field<std::string>(in, "optimizer"));
  ckpt.optimizer.learning_rate = read_field<double>(in, "learning_rate");
  ckpt.optimizer.momentum = read_field<double>(in, "momentum");
  ckpt.optimizer.beta1 = read_field<double>(in, "beta1");
  ckpt.optimizer.beta2 = read_field<double>(in, "beta2");
  ckpt.optimizer.epsilon = read_field<double>(in, "epsilon");
  ckpt.optimizer.batch_size = read_field<std::size_t>(in, "batch_size");

  const auto nblocks = read_field<std::size_t>(in, "blocks");
  for (std::size_t bi = 0; bi < nblocks; ++bi) {
    std::string tag, name;
    int trainable = 0;
    std::size_t ntensors = 0;
    in >> tag >> name >> trainable >> ntensors;
    if (!in || tag != "block") throw ValidationError("malformed checkpoint: expected block");
    ParamBlock block(name, trainable != 0);
    for (std::size_t ti = 0; ti < ntensors; ++ti) {
      std::string ttag, tname;
      std::size_t rank = 0;
      in >> ttag >> tname >> rank;
      if (!in || ttag != "tensor") throw ValidationError("malformed checkpoint: expected tensor");
      Shape shape(rank);
      for (auto& d : shape) in >> d;
      std::vector<double> values(shape_size(shape));
      for (double& v : values) in >> v;
      if (!in) throw ValidationError("malformed checkpoint: truncated tensor " + name + "." + tname);
      block.add(tname, Tensor(shape, std::move(values)));
    }
    ckpt.model.add(std::move(block));
  }
  std::string end;
  in >> end;
  if (end != "end") throw ValidationError("malformed checkpoint: missing end marker");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace matxfer
