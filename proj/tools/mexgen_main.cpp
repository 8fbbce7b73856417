// mexgen --type affine --in N --out M --seed S -o model.mex

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "isf/exec.hpp"

int main(int argc, char** argv) {
  using namespace isf;
  CLI::App app{"Writes MEX1 model blobs with seeded random weights"};
  std::string type = "affine", out, act = "relu";
  std::uint32_t in_dim = 0, out_dim = 0;
  std::vector<std::uint32_t> hidden;
  std::uint64_t seed = 1;
  app.add_option("--type", type, "identity, affine or mlp")->check(CLI::IsMember({"identity", "affine", "mlp"}));
  app.add_option("--in", in_dim, "input features");
  app.add_option("--out", out_dim, "output features");
  app.add_option("--hidden", hidden, "hidden layer widths (mlp)")->delimiter(',');
  app.add_option("--activation", act, "hidden activation (mlp)")->check(CLI::IsMember({"none", "relu"}));
  app.add_option("--seed", seed, "weight seed");
  app.add_option("-o,--output", out, "output file")->required();
  CLI11_PARSE(app, argc, argv);

  Bytes blob;
  if (type == "identity") {
    blob = identity_blob();
  } else {
    if (in_dim == 0 || out_dim == 0) {
      std::cerr << "mexgen: --in and --out must be positive\n";
      return 2;
    }
    if (type == "affine") {
      blob = random_affine_blob(in_dim, out_dim, seed);
    } else {
      std::vector<std::uint32_t> dims{in_dim};
      dims.insert(dims.end(), hidden.begin(), hidden.end());
      dims.push_back(out_dim);
      const Activation a = act == "relu" ? Activation::Relu : Activation::None;
      blob = random_mlp_blob(dims, a, seed);
    }
  }
  std::ofstream f(out, std::ios::binary);
  f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!f) {
    std::cerr << "mexgen: cannot write " << out << "\n";
    return 1;
  }
  const auto model = parse_model(blob);
  std::cout << out << ": " << to_string(model.exec_type) << " " << model.in_dim() << " -> " << model.out_dim()
            << ", " << blob.size() << " bytes\n";
  return 0;
}
