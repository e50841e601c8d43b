//! Passenger-level reference simulator.
//!
//! Demand is turned into discrete arrival events and replayed against a
//! timetable one train at a time. It is slow and only meant for checking the
//! aggregate loading model on small lines.

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::model::{FormationId, Grid, LineConfig, Timetable};

/// A group of passengers arriving together. `weight` may be fractional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassengerEvent {
    pub time: f64,
    pub origin: usize,
    pub destination: usize,
    pub weight: f64,
}

/// How the residual capacity of a train is shared among the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boarding {
    /// Earliest arrivals board first; the marginal group boards partially.
    Fcfs,
    /// Every waiting group boards the same fraction.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassengerOutcome {
    /// `(train, mass)` for every train that carried part of this group.
    pub boarded: Vec<(usize, f64)>,
    /// Mass still waiting after the last train.
    pub stranded: f64,
    /// Mass arriving after the last train passed the origin.
    pub unserved: f64,
    /// Mass-weighted wait until the first train after arrival.
    pub first_wait: f64,
    /// Mass-weighted further wait of passengers that train left behind.
    pub extra_wait: f64,
}

#[derive(Debug, Clone)]
pub struct MicroResult {
    pub passengers: Vec<PassengerOutcome>,
    pub alighting: Grid,
    pub demand: Grid,
    pub boarded: Grid,
    pub onboard: Grid,
    pub left_behind: Grid,
    pub spare: Grid,
    pub first_wait: f64,
    pub extra_wait: f64,
    pub unserved: f64,
}

/// Deterministic discretization of a demand model. Every rate segment is cut
/// at the departure times of its origin station and at `extra_cuts`; a piece
/// of mass `m` becomes `ceil(m)` equal groups placed at the centres of equal
/// sub-intervals, which reproduces the exact first-wait integral.
pub fn discretize(dm: &DemandModel, timetable: &Timetable, extra_cuts: &[f64]) -> Vec<PassengerEvent> {
    let n = dm.n_stations();
    let mut events = Vec::new();
    for i in 0..n {
        let mut cuts: Vec<f64> = (0..timetable.n_trains()).map(|k| timetable.at(k, i)).chain(extra_cuts.iter().copied()).collect();
        cuts.sort_by(f64::total_cmp);
        for j in i + 1..n {
            let Some(rate) = dm.rate(i, j) else { continue };
            for (a, b, r) in rate.segments() {
                if r <= 0.0 || b <= a {
                    continue;
                }
                let mut edges = vec![a];
                edges.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
                edges.push(b);
                for w in edges.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let mass = r * (hi - lo);
                    if mass <= 0.0 {
                        continue;
                    }
                    let count = mass.ceil() as usize;
                    let step = (hi - lo) / count as f64;
                    for e in 0..count {
                        events.push(PassengerEvent { time: lo + (e as f64 + 0.5) * step, origin: i, destination: j, weight: mass / count as f64 });
                    }
                }
            }
        }
    }
    events.sort_by(|x, y| x.time.total_cmp(&y.time));
    events
}

struct Waiting {
    event: usize,
    mass: f64,
    first_departure: f64,
}

/// Replays `events` (sorted by time; ties keep input order) against the
/// timetable.
pub fn micro_simulate(timetable: &Timetable, formations: &[FormationId], cfg: &LineConfig, events: &[PassengerEvent], boarding: Boarding) -> Result<MicroResult> {
    let (kk, n) = (timetable.n_trains(), timetable.n_stations());
    if formations.len() != kk || n != cfg.n_stations() {
        return Err(Error::malformed("timetable, formations and line disagree"));
    }
    if events.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::malformed("passenger events are not sorted by arrival time"));
    }
    let caps = formations
        .iter()
        .map(|id| cfg.capacity(*id).ok_or_else(|| Error::malformed(format!("formation {id} not in catalog"))))
        .collect::<Result<Vec<_>>>()?;

    let mut out: Vec<PassengerOutcome> = events
        .iter()
        .map(|_| PassengerOutcome { boarded: Vec::new(), stranded: 0.0, unserved: 0.0, first_wait: 0.0, extra_wait: 0.0 })
        .collect();
    let mut per_station: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, e) in events.iter().enumerate() {
        if e.origin >= n || e.destination >= n || e.destination <= e.origin {
            return Err(Error::malformed(format!("event {idx} has an invalid origin/destination")));
        }
        per_station[e.origin].push(idx);
    }
    let mut cursor = vec![0usize; n];
    let mut queues: Vec<Vec<Waiting>> = (0..n).map(|_| Vec::new()).collect();

    let g = || Grid::zeros(kk, n);
    let (mut alighting, mut demand, mut boarded, mut onboard_g, mut left, mut spare) = (g(), g(), g(), g(), g(), g());
    let mut first_total = 0.0;
    let mut extra_total = 0.0;

    for k in 0..kk {
        let mut onboard = vec![0.0; n];
        for i in 0..n {
            let t = timetable.at(k, i);
            let off = std::mem::take(&mut onboard[i]);
            alighting[(k, i)] = off;
            let load: f64 = onboard.iter().sum();

            let list = &per_station[i];
            while cursor[i] < list.len() && events[list[cursor[i]]].time <= t {
                let idx = list[cursor[i]];
                let wait = t - events[idx].time;
                out[idx].first_wait = events[idx].weight * wait;
                first_total += events[idx].weight * wait;
                queues[i].push(Waiting { event: idx, mass: events[idx].weight, first_departure: t });
                cursor[i] += 1;
            }
            let queue = &mut queues[i];
            let waiting: f64 = queue.iter().map(|w| w.mass).sum();
            let room = (caps[k] - load).max(0.0);
            let take = waiting.min(room);
            demand[(k, i)] = waiting;
            boarded[(k, i)] = take;

            match boarding {
                Boarding::Fcfs => {
                    let mut left_room = take;
                    for w in queue.iter_mut() {
                        let b = w.mass.min(left_room);
                        if b > 0.0 {
                            board(&mut out[w.event], &mut onboard, events[w.event].destination, k, b, t - w.first_departure, &mut extra_total);
                            w.mass -= b;
                            left_room -= b;
                        }
                    }
                }
                Boarding::Uniform => {
                    let f = if waiting > 0.0 { take / waiting } else { 0.0 };
                    for w in queue.iter_mut() {
                        let b = w.mass * f;
                        if b > 0.0 {
                            board(&mut out[w.event], &mut onboard, events[w.event].destination, k, b, t - w.first_departure, &mut extra_total);
                            w.mass -= b;
                        }
                    }
                }
            }
            queue.retain(|w| w.mass > 1e-12);
            let remaining: f64 = queue.iter().map(|w| w.mass).sum();
            left[(k, i)] = remaining;
            let now: f64 = onboard.iter().sum();
            onboard_g[(k, i)] = now;
            spare[(k, i)] = caps[k] - now;
        }
    }

    let mut unserved = 0.0;
    for i in 0..n {
        let last = timetable.at(kk - 1, i);
        for w in &queues[i] {
            out[w.event].stranded += w.mass;
            out[w.event].extra_wait += w.mass * (last - w.first_departure);
            extra_total += w.mass * (last - w.first_departure);
        }
        for &idx in &per_station[i][cursor[i]..] {
            out[idx].unserved = events[idx].weight;
            unserved += events[idx].weight;
        }
    }

    Ok(MicroResult {
        passengers: out,
        alighting,
        demand,
        boarded,
        onboard: onboard_g,
        left_behind: left,
        spare,
        first_wait: first_total,
        extra_wait: extra_total,
        unserved,
    })
}

fn board(o: &mut PassengerOutcome, onboard: &mut [f64], dest: usize, k: usize, mass: f64, extra: f64, extra_total: &mut f64) {
    o.boarded.push((k, mass));
    o.extra_wait += mass * extra;
    *extra_total += mass * extra;
    onboard[dest] += mass;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FormationType;

    fn line(n: usize, cap_per_car: f64) -> LineConfig {
        LineConfig {
            station_names: (0..n).map(|i| format!("S{i}")).collect(),
            run_times: vec![1.0; n - 1],
            hub_index: 1,
            formation_catalog: vec![FormationType::from_cars(1, 1, cap_per_car)],
        }
    }

    fn ev(time: f64, origin: usize, destination: usize) -> PassengerEvent {
        PassengerEvent { time, origin, destination, weight: 1.0 }
    }

    #[test]
    fn single_passenger_boards_first_train() {
        let cfg = line(2, 10.0);
        let tt = Timetable { departures: Grid::from_rows(&[vec![5.0, 6.0]]) };
        let r = micro_simulate(&tt, &[FormationId(1)], &cfg, &[ev(3.0, 0, 1)], Boarding::Fcfs).unwrap();
        assert_eq!(r.passengers[0].boarded, vec![(0, 1.0)]);
        assert_eq!(r.first_wait, 2.0);
        assert_eq!(r.extra_wait, 0.0);
    }

    #[test]
    fn first_come_first_served() {
        let cfg = line(2, 1.0);
        let tt = Timetable { departures: Grid::from_rows(&[vec![5.0, 6.0], vec![9.0, 10.0]]) };
        let f = [FormationId(1); 2];
        let r = micro_simulate(&tt, &f, &cfg, &[ev(1.0, 0, 1), ev(2.0, 0, 1)], Boarding::Fcfs).unwrap();
        assert_eq!(r.passengers[0].boarded, vec![(0, 1.0)]);
        assert_eq!(r.passengers[1].boarded, vec![(1, 1.0)]);
        assert_eq!(r.first_wait, 4.0 + 3.0);
        assert_eq!(r.extra_wait, 4.0);
        assert_eq!(r.left_behind[(0, 0)], 1.0);
    }

    #[test]
    fn hand_worked_two_trains_three_stations() {
        // Capacity 2. Station 1: A(0.5 -> 3), B(1 -> 2), C(1.5 -> 3).
        // Station 2: D(2 -> 3), E(3 -> 3).
        // Train 1 leaves 1 at 2.0 and 2 at 3.0; train 2 leaves 1 at 6.0 and 2 at 7.0.
        let cfg = line(3, 2.0);
        let tt = Timetable { departures: Grid::from_rows(&[vec![2.0, 3.0, 4.0], vec![6.0, 7.0, 8.0]]) };
        let events = [ev(0.5, 0, 2), ev(1.0, 0, 1), ev(1.5, 0, 2), ev(2.0, 1, 2), ev(3.0, 1, 2)];
        let r = micro_simulate(&tt, &[FormationId(1); 2], &cfg, &events, Boarding::Fcfs).unwrap();
        // Train 1 takes A and B; B alights at 2 freeing one seat for D.
        assert_eq!(r.boarded.to_rows(), vec![vec![2.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]]);
        assert_eq!(r.left_behind.to_rows(), vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]]);
        assert_eq!(r.alighting[(0, 1)], 1.0);
        assert_eq!(r.first_wait, 1.5 + 1.0 + 0.5 + 1.0 + 0.0);
        assert_eq!(r.extra_wait, 4.0 + 4.0);
        assert_eq!(r.spare[(1, 1)], 0.0);
    }

    #[test]
    fn late_arrivals_are_unserved() {
        let cfg = line(2, 10.0);
        let tt = Timetable { departures: Grid::from_rows(&[vec![5.0, 6.0]]) };
        let r = micro_simulate(&tt, &[FormationId(1)], &cfg, &[ev(3.0, 0, 1), ev(5.5, 0, 1)], Boarding::Fcfs).unwrap();
        assert_eq!(r.unserved, 1.0);
        assert_eq!(r.passengers[1].unserved, 1.0);
    }

    #[test]
    fn discretization_preserves_mass() {
        use crate::model::StudyPeriod;
        let period = StudyPeriod::new(0.0, 10.0, 5.0).unwrap();
        let dm = DemandModel::from_blocks(period, 3, &[(0, 2, 0.0, 10.0, 1.3), (1, 2, 2.0, 4.0, 0.25)]).unwrap();
        let tt = Timetable { departures: Grid::from_rows(&[vec![3.0, 4.0, 5.0], vec![7.0, 8.0, 9.0]]) };
        let ev = discretize(&dm, &tt, &[5.0]);
        let total: f64 = ev.iter().map(|e| e.weight).sum();
        assert!((total - 13.5).abs() < 1e-9);
        assert!(ev.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn unsorted_events_rejected() {
        let cfg = line(2, 10.0);
        let tt = Timetable { departures: Grid::from_rows(&[vec![5.0, 6.0]]) };
        assert!(micro_simulate(&tt, &[FormationId(1)], &cfg, &[ev(3.0, 0, 1), ev(1.0, 0, 1)], Boarding::Fcfs).is_err());
    }
}
