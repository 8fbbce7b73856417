// producer --spec spec.json --rank R --run-id ID [--csv out.csv]

#include "rank_main.hpp"

int main(int argc, char** argv) {
  using namespace isf;
  CLI::App app{"Simulation reproducer: emulated compute steps that publish tensors"};
  tools::RankArgs args;
  tools::add_rank_flags(app, args);
  CLI11_PARSE(app, argc, argv);

  return tools::run_rank("producer", args, [&](const WorkloadSpec& spec, const RankContext& ctx, TimingSink& sink) {
    if (spec.mode == WorkloadMode::Inference) throw std::invalid_argument("inference workloads run under `infer`");
    auto client = Client::connect(tools::client_config(args), &sink);
    const auto res = produce(spec, client, sink, ctx);
    std::cout << "producer " << ctx.rank << ": " << res.sends << " sends, " << res.mismatches << " mismatches\n";
    if (res.mismatches > 0) throw DataMissingError("read-back did not match the sent payload");
    return kExitOk;
  });
}
