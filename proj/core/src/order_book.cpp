#include "mktsim/order_book.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mktsim/error.hpp"

namespace mktsim {

std::vector<double> BookSnapshot::as_vector() const {
  std::vector<double> v(bid_volumes);
  v.insert(v.end(), ask_volumes.begin(), ask_volumes.end());
  return v;
}

OrderBook::OrderBook(double tick_size) : tick_(tick_size) {
  if (!(tick_size > 0.0)) throw InvalidArgument("tick size must be positive");
}

Ticks OrderBook::to_ticks(double price) const {
  if (!std::isfinite(price) || price <= 0.0)
    throw InvalidPrice("price must be positive and finite, got " + std::to_string(price));
  const double scaled = price / tick_;
  const double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-6)
    throw InvalidPrice("price " + std::to_string(price) + " is not on the tick grid");
  return static_cast<Ticks>(rounded);
}

Ticks OrderBook::best_bid_ticks() const {
  if (bids_.empty()) throw EmptySide("bid side is empty");
  return bids_.begin()->first;
}

Ticks OrderBook::best_ask_ticks() const {
  if (asks_.empty()) throw EmptySide("ask side is empty");
  return asks_.begin()->first;
}

double OrderBook::best_bid() const { return to_price(best_bid_ticks()); }
double OrderBook::best_ask() const { return to_price(best_ask_ticks()); }

ReferencePrices OrderBook::mid_and_spreads() const {
  const double bb = best_bid();
  const double ba = best_ask();
  const double mid = 0.5 * (bb + ba);
  return ReferencePrices{mid, mid - bb, ba - mid};
}

template <class Map>
void OrderBook::match(Map& opposite, Side aggressor, std::optional<Ticks> limit, double& qty,
                      AgentId owner, std::vector<Fill>& fills) {
  while (qty > 0.0 && !opposite.empty()) {
    auto level = opposite.begin();
    if (limit) {
      const bool crosses = aggressor == Side::buy ? level->first <= *limit : level->first >= *limit;
      if (!crosses) break;
    }
    auto& queue = level->second;
    while (qty > 0.0 && !queue.empty()) {
      RestingOrder& maker = queue.front();
      const double q = std::min(qty, maker.qty);
      fills.push_back(Fill{maker.id, maker.owner, owner, aggressor, to_price(level->first), q});
      maker.qty -= q;
      qty -= q;
      if (maker.qty <= 0.0) {
        index_.erase(maker.id);
        queue.pop_front();
      }
    }
    if (queue.empty()) opposite.erase(level);
  }
}

LimitResult OrderBook::submit_limit(Side side, double price, double qty, AgentId owner) {
  return submit_limit_ticks(side, to_ticks(price), qty, owner);
}

LimitResult OrderBook::submit_limit_ticks(Side side, Ticks price, double qty, AgentId owner) {
  if (!(qty > 0.0)) throw InvalidArgument("limit order quantity must be positive");
  if (price <= 0) throw InvalidPrice("limit price must be positive");
  LimitResult result;
  result.order_id = next_id_++;
  double remaining = qty;
  if (side == Side::buy)
    match(asks_, side, price, remaining, owner, result.fills);
  else
    match(bids_, side, price, remaining, owner, result.fills);
  if (remaining > 0.0) {
    RestingOrder order{result.order_id, owner, remaining, seq_++};
    if (side == Side::buy)
      bids_[price].push_back(order);
    else
      asks_[price].push_back(order);
    index_.emplace(order.id, std::make_pair(side, price));
    result.rested_qty = remaining;
  }
  return result;
}

MarketResult OrderBook::submit_market(Side side, double qty, AgentId owner) {
  if (!(qty > 0.0)) throw InvalidArgument("market order quantity must be positive");
  MarketResult result;
  result.requested = qty;
  double remaining = qty;
  if (side == Side::buy)
    match(asks_, side, std::nullopt, remaining, owner, result.fills);
  else
    match(bids_, side, std::nullopt, remaining, owner, result.fills);
  double notional = 0.0;
  for (const Fill& f : result.fills) {
    result.executed += f.qty;
    notional += f.qty * f.price;
  }
  if (result.executed > 0.0) result.vwap = notional / result.executed;
  return result;
}

std::pair<double, std::optional<double>> OrderBook::probe_market(Side side, double qty) const {
  double remaining = qty, executed = 0.0, notional = 0.0;
  auto walk = [&](const auto& levels) {
    for (const auto& [p, queue] : levels) {
      if (remaining <= 0.0) break;
      for (const auto& o : queue) {
        const double q = std::min(remaining, o.qty);
        executed += q;
        notional += q * to_price(p);
        remaining -= q;
        if (remaining <= 0.0) break;
      }
    }
  };
  if (side == Side::buy)
    walk(asks_);
  else
    walk(bids_);
  if (executed <= 0.0) return {0.0, std::nullopt};
  return {executed, notional / executed};
}

namespace {
// Returns (removed qty, order exhausted).
template <class Map>
std::pair<double, bool> erase_from(Map& levels, Ticks price, OrderId id, double qty) {
  auto level = levels.find(price);
  if (level == levels.end()) return {0.0, true};
  auto& queue = level->second;
  auto it = std::find_if(queue.begin(), queue.end(), [id](const RestingOrder& o) { return o.id == id; });
  if (it == queue.end()) return {0.0, true};
  const double removed = std::min(qty, it->qty);
  it->qty -= removed;
  const bool gone = it->qty <= 0.0;
  if (gone) queue.erase(it);
  if (queue.empty()) levels.erase(level);
  return {removed, gone};
}
} // namespace

double OrderBook::reduce(OrderId id, double qty) {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownOrder("order " + std::to_string(id) + " is not resting");
  const auto [side, price] = it->second;
  const auto [removed, gone] =
      side == Side::buy ? erase_from(bids_, price, id, qty) : erase_from(asks_, price, id, qty);
  if (gone) index_.erase(it);
  return removed;
}

double OrderBook::cancel(OrderId id) {
  return reduce(id, std::numeric_limits<double>::infinity());
}

const std::deque<RestingOrder>* OrderBook::queue_at(Side book_side, Ticks price) const {
  if (book_side == Side::buy) {
    auto it = bids_.find(price);
    return it == bids_.end() ? nullptr : &it->second;
  }
  auto it = asks_.find(price);
  return it == asks_.end() ? nullptr : &it->second;
}

double OrderBook::volume_at(Side book_side, Ticks price) const {
  const auto* queue = queue_at(book_side, price);
  if (!queue) return 0.0;
  double v = 0.0;
  for (const auto& o : *queue) v += o.qty;
  return v;
}

double OrderBook::total_volume(Side book_side) const {
  double v = 0.0;
  auto add = [&](const auto& levels) {
    for (const auto& [p, queue] : levels)
      for (const auto& o : queue) v += o.qty;
  };
  if (book_side == Side::buy)
    add(bids_);
  else
    add(asks_);
  return v;
}

Ticks OrderBook::level_ticks(Side book_side, int k) const {
  // With s = bid + ask in ticks: ceil(s/2) - k below the mid and
  // floor(s/2) + k above it. Prices are positive so integer division floors.
  const Ticks s = best_bid_ticks() + best_ask_ticks();
  return book_side == Side::buy ? (s + 1) / 2 - k : s / 2 + k;
}

BookSnapshot OrderBook::snapshot(int n) const {
  BookSnapshot snap;
  snap.mid = mid_and_spreads().p_mid;
  snap.bid_volumes.resize(n);
  snap.ask_volumes.resize(n);
  for (int k = 1; k <= n; ++k) {
    snap.bid_volumes[k - 1] = volume_at(Side::buy, level_ticks(Side::buy, k));
    snap.ask_volumes[k - 1] = volume_at(Side::sell, level_ticks(Side::sell, k));
  }
  return snap;
}

} // namespace mktsim
