#pragma once

// HTTP/JSON inference service over one model bundle.
//
//   GET    /graph                 structure, labels, equivalence classes
//   POST   /decode   {"z":[x,y]}  positions (normalized to [0,1]^2) and raw
//   GET    /grid?res=8            res^2 decoded layouts at the cell centres
//   GET    /heatmap?metric=&res=  200 with the grid, or 202 with a job
//   GET    /jobs/{id}             heatmap job progress
//   DELETE /jobs/{id}             cancels a running heatmap job
//   POST   /encode   {"positions":[[x,y],...]}  latent code
//   GET    /metrics?z=x,y         crossings, crosslessness, shape
//
// A z outside [-1, 1]^2 gets a 400 carrying the clamped point as suggestion.

#include "layoutgen/bundle.hpp"

#include <memory>
#include <string>

namespace layoutgen {

// Translates and scales uniformly into [0, 1]^2, centring the shorter side.
Positions normalize_positions(const Positions& p);

class Service {
 public:
  explicit Service(ModelBundle bundle);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds to host:port (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  // Serves until stop(). Requires bind().
  void listen();
  // bind + listen on a background thread; returns the port once ready.
  int start(const std::string& host, int port);
  void stop();

  const ModelBundle& bundle() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace layoutgen
