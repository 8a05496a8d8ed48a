// SPDX-License-Identifier: Apache-2.0
#include "urm/model.hpp"

namespace urm {

pipeline::AnticipationModel build_model(const RunConfig& cfg, Rng& rng) {
  cfg.validate();
  pipeline::AnticipationModel m;
  m.cell = cell::CellParams::init(cfg.n, cfg.c_in, cfg.c, cfg.heads,
                                  cfg.scale_mode, rng, cfg.precision);
  m.cell.update_take = cfg.update_take;

  switch (cfg.strategy) {
    case EdgeKind::implicit:
      m.strategy = edges::Implicit{};
      break;
    case EdgeKind::tb:
      m.strategy = edges::TemplateBank::init(cfg.bank_size, cfg.n, cfg.c, rng,
                                             cfg.precision);
      break;
    case EdgeKind::ctp:
      m.strategy = edges::CtpParams::init(cfg.ctp_variant, cfg.n, cfg.c, rng,
                                          cfg.precision);
      break;
  }

  pipeline::HeadSource source;
  switch (cfg.classifier_source) {
    case HeadSourceChoice::mean_pool:
      source = pipeline::HeadSource::mean_pool;
      break;
    case HeadSourceChoice::cls_tokens:
      source = pipeline::HeadSource::cls_tokens;
      break;
    case HeadSourceChoice::auto_select:
    default:
      source = cfg.strategy == EdgeKind::ctp
                   ? pipeline::HeadSource::cls_tokens
                   : pipeline::HeadSource::mean_pool;
      break;
  }

  m.heads = pipeline::ClassifierHeads::init(
      cfg.c, cfg.verb_classes, cfg.noun_classes, cfg.action_classes, source,
      cfg.action_head, rng, cfg.precision);
  return m;
}

}  // namespace urm
