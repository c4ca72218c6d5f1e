#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oepg/error.hpp"
#include "oepg/trainer.hpp"

// On-disk layout:
//   "OEPGCKPT 1\n"
//   "<header byte count>\n"
//   JSON header: run metadata + manifest [{name, rows, cols}, ...]
//   payload: for each manifest entry, rows*cols little-endian f64 values

namespace oepg {

using json = nlohmann::json;

namespace {

constexpr const char* kMagic = "OEPGCKPT 1";

void append_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xFF));
    bits >>= 8;
  }
}

double read_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

Matrix queue_matrix(const std::vector<std::vector<double>>& q, std::size_t dim) {
  Matrix m(q.size(), dim);
  for (std::size_t i = 0; i < q.size(); ++i) std::copy(q[i].begin(), q[i].end(), m.row(i).begin());
  return m;
}

std::string cluster_name(std::size_t h, std::size_t s) {
  return "clusters.h" + std::to_string(h) + ".s" + std::to_string(s);
}

std::string queue_name(std::size_t h, std::size_t s) {
  return "queues.h" + std::to_string(h) + ".s" + std::to_string(s);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, const Matrix*>> entries;
  for (const auto& [name, e] : ckpt.params) entries.emplace_back(name, &e.value);
  for (const auto& [name, m] : ckpt.optimizer.first_moment) entries.emplace_back("adam.m." + name, &m);
  for (const auto& [name, m] : ckpt.optimizer.second_moment) entries.emplace_back("adam.v." + name, &m);

  // Centroid rows and queues are stored as separate entries; materialize them first.
  std::vector<std::pair<std::string, Matrix>> derived;
  if (ckpt.hierarchy) {
    const auto& hier = *ckpt.hierarchy;
    for (std::size_t h = 0; h < hier.hierarchies(); ++h) {
      for (std::size_t s = 0; s < hier.scales[h]; ++s) {
        derived.emplace_back(cluster_name(h, s), Matrix::row_vector(hier.centroids[h].row(s)));
      }
    }
    for (std::size_t h = 0; h < ckpt.queues.queues.size(); ++h) {
      for (std::size_t s = 0; s < ckpt.queues.queues[h].size(); ++s) {
        derived.emplace_back(queue_name(h, s), queue_matrix(ckpt.queues.queues[h][s], hier.dim()));
      }
    }
  }
  derived.emplace_back("history.loss", Matrix::row_vector(ckpt.loss_history));
  for (const auto& [name, m] : derived) entries.emplace_back(name, &m);

  json header;
  header["format"] = "oepg-checkpoint";
  header["config"] = to_key_values(ckpt.config);
  header["input_dim"] = ckpt.input_dim;
  header["epoch"] = ckpt.epoch;
  header["momentum_updates"] = ckpt.momentum_updates;
  header["optimizer"] = {{"step", ckpt.optimizer.step},
                         {"learning_rate", ckpt.optimizer.config.learning_rate},
                         {"beta1", ckpt.optimizer.config.beta1},
                         {"beta2", ckpt.optimizer.config.beta2},
                         {"epsilon", ckpt.optimizer.config.epsilon}};
  header["has_hierarchy"] = ckpt.hierarchy.has_value();
  header["scales"] = ckpt.hierarchy ? ckpt.hierarchy->scales : std::vector<std::size_t>{};
  header["queue_budget"] = ckpt.queues.budget;
  json manifest = json::array();
  for (const auto& [name, m] : entries) manifest.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["manifest"] = std::move(manifest);

  const std::string head = header.dump();
  std::string out = std::string(kMagic) + "\n" + std::to_string(head.size()) + "\n" + head;
  for (const auto& [name, m] : entries) {
    for (double v : m->data()) append_f64(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const std::string magic_line = std::string(kMagic) + "\n";
  if (bytes.compare(0, magic_line.size(), magic_line) != 0) throw FormatError("not an OEPG checkpoint");
  const auto nl = bytes.find('\n', magic_line.size());
  if (nl == std::string::npos) throw FormatError("checkpoint header length missing");
  std::size_t head_len = 0;
  try {
    head_len = std::stoull(bytes.substr(magic_line.size(), nl - magic_line.size()));
  } catch (const std::exception&) {
    throw FormatError("checkpoint header length is not a number");
  }
  const std::size_t head_start = nl + 1;
  if (head_start + head_len > bytes.size()) throw FormatError("checkpoint truncated inside the header");
  json header;
  try {
    header = json::parse(bytes.substr(head_start, head_len));
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  std::map<std::string, Matrix> payload;
  try {
    ckpt.config = config_from_key_values(header.at("config").get<std::map<std::string, std::string>>());
    ckpt.input_dim = header.at("input_dim").get<std::size_t>();
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.momentum_updates = header.at("momentum_updates").get<std::uint64_t>();
    const auto& opt = header.at("optimizer");
    ckpt.optimizer.step = opt.at("step").get<std::uint64_t>();
    ckpt.optimizer.config = AdamConfig{opt.at("learning_rate").get<double>(), opt.at("beta1").get<double>(),
                                       opt.at("beta2").get<double>(), opt.at("epsilon").get<double>()};
    ckpt.queues.budget = header.at("queue_budget").get<std::size_t>();

    std::size_t offset = head_start + head_len;
    for (const auto& entry : header.at("manifest")) {
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      const std::size_t count = rows * cols;
      if (cols != 0 && count / cols != rows) throw FormatError("manifest entry '" + name + "' has an absurd shape");
      if (offset + count * 8 > bytes.size() || offset + count * 8 < offset) {
        throw FormatError("payload truncated at manifest entry '" + name + "'");
      }
      std::vector<double> data(count);
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
      for (std::size_t i = 0; i < count; ++i) data[i] = read_f64(p + 8 * i);
      offset += count * 8;
      if (!payload.emplace(name, Matrix(rows, cols, std::move(data))).second) {
        throw FormatError("duplicate manifest entry '" + name + "'");
      }
    }
    if (offset != bytes.size()) throw FormatError("trailing bytes after the checkpoint payload");

    for (auto& [name, m] : payload) {
      if (name.rfind("adam.m.", 0) == 0) {
        ckpt.optimizer.first_moment.emplace(name.substr(7), m);
      } else if (name.rfind("adam.v.", 0) == 0) {
        ckpt.optimizer.second_moment.emplace(name.substr(7), m);
      } else if (name.rfind("clusters.", 0) == 0 || name.rfind("queues.", 0) == 0 || name == "history.loss") {
        continue;
      } else {
        ckpt.params.add(name, m);
      }
    }
    for (const auto& [name, e] : ckpt.params) {
      const auto m = ckpt.optimizer.first_moment.find(name);
      const auto v = ckpt.optimizer.second_moment.find(name);
      if (m == ckpt.optimizer.first_moment.end() || v == ckpt.optimizer.second_moment.end() ||
          !m->second.same_shape(e.value) || !v->second.same_shape(e.value)) {
        throw FormatError("optimizer moments missing or misshapen for '" + name + "'");
      }
    }
    if (ckpt.optimizer.first_moment.size() != ckpt.params.size() ||
        ckpt.optimizer.second_moment.size() != ckpt.params.size()) {
      throw FormatError("optimizer moments reference unknown parameters");
    }

    auto take = [&](const std::string& name) -> const Matrix& {
      auto it = payload.find(name);
      if (it == payload.end()) throw FormatError("manifest entry '" + name + "' is missing");
      return it->second;
    };
    const Matrix& history = take("history.loss");
    ckpt.loss_history.assign(history.data().begin(), history.data().end());

    if (header.at("has_hierarchy").get<bool>()) {
      ClusterHierarchy hier;
      hier.scales = header.at("scales").get<std::vector<std::size_t>>();
      validate_scales(hier.scales);
      ckpt.queues.queues.resize(hier.scales.size());
      for (std::size_t h = 0; h < hier.scales.size(); ++h) {
        Matrix c;
        for (std::size_t s = 0; s < hier.scales[h]; ++s) {
          const Matrix& row = take(cluster_name(h, s));
          if (row.rows() != 1) throw FormatError("manifest entry '" + cluster_name(h, s) + "' must be a row");
          if (s == 0) c = Matrix(hier.scales[h], row.cols());
          if (row.cols() != c.cols()) throw FormatError("manifest entry '" + cluster_name(h, s) + "' has the wrong width");
          std::copy_n(row.data().begin(), row.cols(), c.row(s).begin());
          const Matrix& q = take(queue_name(h, s));
          if (q.rows() > ckpt.queues.budget || (q.rows() > 0 && q.cols() != row.cols())) {
            throw FormatError("manifest entry '" + queue_name(h, s) + "' violates the queue budget or width");
          }
          std::vector<std::vector<double>> queue;
          for (std::size_t i = 0; i < q.rows(); ++i) queue.emplace_back(q.row(i).begin(), q.row(i).end());
          ckpt.queues.queues[h].push_back(std::move(queue));
        }
        hier.centroids.push_back(std::move(c));
      }
      ckpt.hierarchy = std::move(hier);
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("corrupt checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace oepg
