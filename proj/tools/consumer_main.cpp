// consumer --spec spec.json --rank R --run-id ID --producers 0,1,2 [--shuffle]

#include <sstream>

#include "rank_main.hpp"

namespace {

std::vector<std::int64_t> parse_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoll(item, &used);
    if (used != item.size() || v < 0) throw std::invalid_argument("bad producer rank \"" + item + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--producers is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace isf;
  CLI::App app{"Training data loader: gathers producer tensors each epoch"};
  tools::RankArgs args;
  tools::add_rank_flags(app, args);
  std::string producers;
  bool shuffle = false;
  app.add_option("--producers", producers, "comma-separated producer ranks")->required();
  app.add_flag("--shuffle", shuffle, "draw producer ranks at random each epoch");
  CLI11_PARSE(app, argc, argv);

  return tools::run_rank("consumer", args, [&](const WorkloadSpec& base, const RankContext& ctx, TimingSink& sink) {
    WorkloadSpec spec = base;
    spec.shuffle = spec.shuffle || shuffle;
    const auto assigned = parse_list(producers);
    auto client = Client::connect(tools::client_config(args), &sink);
    const auto res = consume(spec, client, sink, ctx, assigned);
    std::cout << "consumer " << ctx.rank << ": " << res.epochs << " epochs, " << res.gets << " gets, "
              << res.mismatches << " mismatches\n";
    if (res.mismatches > 0) throw DataMissingError("retrieved tensors did not match the produced payloads");
    return kExitOk;
  });
}
