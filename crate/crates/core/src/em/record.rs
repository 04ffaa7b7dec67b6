/// A fixed-size record stored little-endian in an external array.
pub trait Record: Copy + Send + Sync + 'static {
    const SIZE: usize;

    fn write_le(&self, out: &mut [u8]);
    fn read_le(buf: &[u8]) -> Self;
}

#[inline]
pub(crate) fn get_u64(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

#[inline]
pub(crate) fn put_u64(buf: &mut [u8], at: usize, v: u64) {
    buf[at..at + 8].copy_from_slice(&v.to_le_bytes());
}

impl Record for u32 {
    const SIZE: usize = 4;

    fn write_le(&self, out: &mut [u8]) {
        out[..4].copy_from_slice(&self.to_le_bytes());
    }

    fn read_le(buf: &[u8]) -> Self {
        u32::from_le_bytes(buf[..4].try_into().unwrap())
    }
}

impl Record for u64 {
    const SIZE: usize = 8;

    fn write_le(&self, out: &mut [u8]) {
        put_u64(out, 0, *self);
    }

    fn read_le(buf: &[u8]) -> Self {
        get_u64(buf, 0)
    }
}

macro_rules! tuple_record {
    ($n:expr; $($idx:tt),+) => {
        impl Record for ($(tuple_record!(@ty $idx),)+) {
            const SIZE: usize = 8 * $n;

            fn write_le(&self, out: &mut [u8]) {
                $(put_u64(out, 8 * $idx, self.$idx);)+
            }

            fn read_le(buf: &[u8]) -> Self {
                ($(get_u64(buf, 8 * $idx),)+)
            }
        }
    };
    (@ty $idx:tt) => { u64 };
}

tuple_record!(2; 0, 1);
tuple_record!(3; 0, 1, 2);
tuple_record!(4; 0, 1, 2, 3);
tuple_record!(5; 0, 1, 2, 3, 4);
