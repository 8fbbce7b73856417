// infer --spec spec.json --rank R --run-id ID [--inline]

#include "rank_main.hpp"

int main(int argc, char** argv) {
  using namespace isf;
  CLI::App app{"Inference reproducer: send, evaluate, retrieve per step"};
  tools::RankArgs args;
  tools::add_rank_flags(app, args);
  bool inline_flag = false;
  app.add_flag("--inline", inline_flag, "evaluate in-process, no store");
  CLI11_PARSE(app, argc, argv);

  return tools::run_rank("infer", args, [&](const WorkloadSpec& spec, const RankContext& ctx, TimingSink& sink) {
    InferResult res;
    if (inline_flag || spec.inline_eval) {
      res = infer_inline(spec, sink, ctx);
    } else {
      auto client = Client::connect(tools::client_config(args), &sink);
      res = infer(spec, client, sink, ctx);
    }
    std::cout << "infer " << ctx.rank << ": " << res.iterations << " iterations, " << res.mismatches
              << " mismatches\n";
    if (res.mismatches > 0) throw DataMissingError("networked output differs from the in-process executor");
    return kExitOk;
  });
}
