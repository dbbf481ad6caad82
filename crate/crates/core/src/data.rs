/// A dataset, or the rows of it that survive a deletion.
///
/// Positions inside the view are 0-based and dense; `original` maps them back
/// to row numbers of the full dataset, which is what randomness is keyed on.
#[derive(Debug)]
pub struct DataView<'a, T> {
    data: &'a [T],
    rows: Option<&'a [usize]>,
}

impl<T> Clone for DataView<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for DataView<'_, T> {}

impl<'a, T> DataView<'a, T> {
    pub fn full(data: &'a [T]) -> Self {
        DataView { data, rows: None }
    }

    /// `rows` must be strictly increasing indices into `data`.
    pub fn subset(data: &'a [T], rows: &'a [usize]) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(rows.last().is_none_or(|&r| r < data.len()));
        DataView {
            data,
            rows: Some(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.map_or(self.data.len(), |r| r.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Size of the full dataset the view was cut from.
    pub fn universe(&self) -> usize {
        self.data.len()
    }

    pub fn all(&self) -> &'a [T] {
        self.data
    }

    #[inline]
    pub fn original(&self, i: usize) -> usize {
        self.rows.map_or(i, |r| r[i])
    }

    #[inline]
    pub fn get(&self, i: usize) -> &'a T {
        &self.data[self.original(i)]
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a T> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Membership mask over the full dataset.
    pub fn mask(&self) -> Vec<bool> {
        match self.rows {
            None => vec![true; self.data.len()],
            Some(rows) => {
                let mut m = vec![false; self.data.len()];
                for &r in rows {
                    m[r] = true;
                }
                m
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_maps_back_to_original_rows() {
        let data = [10, 20, 30, 40];
        let rows = [1, 3];
        let v = DataView::subset(&data, &rows);
        assert_eq!(v.len(), 2);
        assert_eq!(v.universe(), 4);
        assert_eq!(v.original(1), 3);
        assert_eq!(*v.get(0), 20);
        assert_eq!(v.iter().copied().collect::<Vec<_>>(), vec![20, 40]);
        assert_eq!(v.mask(), vec![false, true, false, true]);
        assert_eq!(DataView::full(&data).mask(), vec![true; 4]);
    }
}
